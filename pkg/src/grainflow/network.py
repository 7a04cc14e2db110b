"""Labeled polyline networks encoding open partitions of the plane/torus.

A network is a vertex array plus polyline edges carrying (label_left,
label_right) as seen walking the chain from its first to its last vertex.
Regions are implicit: they are whatever the labeled boundary cuts out.
Interior boundaries (same label on both sides) are first-class since the
deformation step must delete them.

Degree-1 endpoints are allowed only on interior-boundary edges; every other
chain terminates at a junction (degree >= 3) or closes into a loop.  At each
junction the labels must be cyclically consistent: walking the outgoing
edge-ends in angular order, the left label of one end equals the right label
of the next.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from .domain import Domain, torus


@dataclass(frozen=True)
class Edge:
    chain: tuple  # vertex indices, len >= 2; closed loop iff chain[0]==chain[-1]
    left: int
    right: int


@dataclass(frozen=True)
class MeshScale:
    h_min: float = 0.01
    h_max: float = 0.05

    @property
    def weld(self):
        # delta_weld = h_min / 4 keeps junction resolution unambiguous
        return self.h_min / 4.0


@dataclass
class LabeledNetwork:
    domain: Domain
    n_labels: int
    vertices: np.ndarray  # (V, 2)
    edges: list  # of Edge
    scale: MeshScale = field(default_factory=MeshScale)

    def copy(self):
        return LabeledNetwork(self.domain, self.n_labels,
                              self.vertices.copy(), list(self.edges), self.scale)

    # ---- derived segment arrays -------------------------------------------

    def segment_arrays(self):
        """(p0, p1, edge_id) with p1 unwrapped next to p0 on the torus."""
        p0s, p1s, eids, lefts, rights = [], [], [], [], []
        for ei, e in enumerate(self.edges):
            idx = np.asarray(e.chain)
            a = self.vertices[idx[:-1]]
            b = self.vertices[idx[1:]]
            d = self.domain.delta(a, b)
            p0s.append(a)
            p1s.append(a + d)
            eids.append(np.full(len(idx) - 1, ei))
            lefts.append(np.full(len(idx) - 1, e.left))
            rights.append(np.full(len(idx) - 1, e.right))
        if not p0s:
            z = np.zeros((0, 2))
            zi = np.zeros(0, dtype=int)
            return z, z, zi, zi, zi
        return (np.concatenate(p0s), np.concatenate(p1s),
                np.concatenate(eids), np.concatenate(lefts), np.concatenate(rights))

    def segment_lengths(self):
        p0, p1, _, _, _ = self.segment_arrays()
        return np.linalg.norm(p1 - p0, axis=1)

    def total_length(self):
        return float(np.sum(self.segment_lengths()))

    # ---- incidence ---------------------------------------------------------

    def outgoing_ends(self):
        """Map vertex -> list of (direction, left_label, right_label, edge_id, forward).

        One entry per edge-end.  Labels are as seen walking outward from the
        vertex; forward is True for the chain-start end.
        """
        ends = {}
        for ei, e in enumerate(self.edges):
            c = e.chain
            d0 = self.domain.delta(self.vertices[c[0]], self.vertices[c[1]])
            d1 = self.domain.delta(self.vertices[c[-1]], self.vertices[c[-2]])
            ends.setdefault(c[0], []).append((d0, e.left, e.right, ei, True))
            ends.setdefault(c[-1], []).append((d1, e.right, e.left, ei, False))
        return ends

    def vertex_degrees(self):
        deg = np.zeros(len(self.vertices), dtype=int)
        for ei, e in enumerate(self.edges):
            c = np.asarray(e.chain)
            deg[c[0]] += 1
            deg[c[-1]] += 1
            interior = c[1:-1]
            if len(interior):
                np.add.at(deg, interior, 2)
        return deg

    def junctions(self):
        return np.nonzero(self.vertex_degrees() >= 3)[0]


# ---- validation -------------------------------------------------------------


@dataclass
class ValidationReport:
    violations: list

    @property
    def ok(self):
        return not self.violations


def _segments_properly_cross(a0, a1, b0, b1, tol=1e-12):
    """True if open segments cross at an interior point of both."""
    d1 = a1 - a0
    d2 = b1 - b0
    den = d1[0] * d2[1] - d1[1] * d2[0]
    if abs(den) < tol:
        return False
    r = b0 - a0
    t = (r[0] * d2[1] - r[1] * d2[0]) / den
    s = (r[0] * d1[1] - r[1] * d1[0]) / den
    return tol < t < 1 - tol and tol < s < 1 - tol


def validate_partition(net: LabeledNetwork):
    """Check the partition invariants; violations are data, not faults."""
    v = []
    nv = len(net.vertices)
    for ei, e in enumerate(net.edges):
        if len(e.chain) < 2:
            v.append(("edge", ei, "chain too short"))
        if not (1 <= e.left <= net.n_labels and 1 <= e.right <= net.n_labels):
            v.append(("edge", ei, "label out of range"))
        if any(not 0 <= i < nv for i in e.chain):
            v.append(("edge", ei, "vertex index out of range"))
    if v:
        return ValidationReport(v)

    if not np.all(np.isfinite(net.vertices)):
        v.append(("vertices", None, "non-finite coordinates"))
    if net.domain.periodic:
        if len(net.vertices) and not np.all(
                (net.vertices >= -1e-12) & (net.vertices < 1.0 + 1e-12)):
            v.append(("vertices", None, "outside fundamental cell"))
    else:
        x0, y0, x1, y1 = net.domain.bbox
        if len(net.vertices) and not (
                np.all(net.vertices[:, 0] >= x0) and np.all(net.vertices[:, 0] <= x1)
                and np.all(net.vertices[:, 1] >= y0) and np.all(net.vertices[:, 1] <= y1)):
            v.append(("vertices", None, "outside bounding box"))

    deg = net.vertex_degrees()
    ends = net.outgoing_ends()

    # free ends only on interior boundaries, or on the plane bounding box
    # (partitions of the whole plane are truncated there)
    def on_bbox(p):
        if net.domain.periodic:
            return False
        x0, y0, x1, y1 = net.domain.bbox
        tol = 1e-9
        return (abs(p[0] - x0) < tol or abs(p[0] - x1) < tol
                or abs(p[1] - y0) < tol or abs(p[1] - y1) < tol)

    for ei, e in enumerate(net.edges):
        for vi in (e.chain[0], e.chain[-1]):
            if deg[vi] == 1 and e.left != e.right and not on_bbox(net.vertices[vi]):
                v.append(("vertex", int(vi), "free end on non-interior edge"))

    # cyclic label consistency at junctions
    for vi, lst in ends.items():
        if len(lst) < 3:
            continue
        angles = [np.arctan2(d[1], d[0]) for d, _, _, _, _ in lst]
        order = np.argsort(angles)
        k = len(lst)
        for a in range(k):
            cur = lst[order[a]]
            nxt = lst[order[(a + 1) % k]]
            # sector ccw of cur = left label of cur = right label of nxt
            if cur[1] != nxt[2]:
                v.append(("vertex", int(vi), "inconsistent labels around junction"))
                break

    # minimum vertex separation (used vertices only)
    used = np.zeros(nv, dtype=bool)
    for e in net.edges:
        used[list(e.chain)] = True
    pts = net.vertices[used]
    if len(pts) > 1:
        if net.domain.periodic:
            tree = cKDTree(np.mod(pts, 1.0), boxsize=1.0)
        else:
            tree = cKDTree(pts)
        pairs = tree.query_pairs(net.scale.weld)
        if pairs:
            # graph-near vertices may sit close legitimately (short bridges,
            # freshly split junctions, shrinking grains); the tolerance only
            # flags near-duplicates whose connecting path is long, i.e. a
            # genuine near self-touch rather than a single small feature
            import heapq
            cap_len = 4.0 * net.scale.h_min
            nbr = {}
            for e in net.edges:
                for a, b in zip(e.chain[:-1], e.chain[1:]):
                    w = float(np.linalg.norm(net.domain.delta(
                        net.vertices[a], net.vertices[b])))
                    nbr.setdefault(a, []).append((b, w))
                    nbr.setdefault(b, []).append((a, w))

            def near_in_graph(a, b):
                # shortest-path search bounded by cap_len
                dist = {a: 0.0}
                heap = [(0.0, a)]
                while heap:
                    d, x = heapq.heappop(heap)
                    if x == b:
                        return True
                    if d > dist.get(x, np.inf):
                        continue
                    for y, w in nbr.get(x, ()):
                        nd = d + w
                        if nd <= cap_len and nd < dist.get(y, np.inf):
                            dist[y] = nd
                            heapq.heappush(heap, (nd, y))
                return False

            ids = np.nonzero(used)[0]
            for i, j in pairs:
                a, b = int(ids[i]), int(ids[j])
                if near_in_graph(a, b):
                    continue
                v.append(("vertex", a,
                          "closer than weld tolerance to vertex %d" % b))
                break

    # no proper segment crossings
    p0, p1, eid, _, _ = net.segment_arrays()
    if len(p0) > 1:
        mid = 0.5 * (p0 + p1)
        half = 0.5 * np.linalg.norm(p1 - p0, axis=1)
        r = float(np.max(half)) if len(half) else 0.0
        tree = cKDTree(np.mod(mid, 1.0) if net.domain.periodic else mid,
                       boxsize=1.0 if net.domain.periodic else None)
        for i, j in tree.query_pairs(2.0 * r + 1e-12):
            # translate segment j to its minimum image next to segment i
            off = net.domain.delta(mid[j], mid[i])
            shift = (mid[i] - off) - mid[j]
            b0 = p0[j] + shift
            b1 = p1[j] + shift
            if _segments_properly_cross(p0[i], p1[i], b0, b1):
                v.append(("edge", int(eid[i]),
                          "segment crossing with edge %d" % eid[j]))
    return ValidationReport(v)


# ---- region areas (vertical slab sweep) --------------------------------------


@dataclass
class RegionAreaTable:
    areas: dict  # label -> area (clipped to bbox in plane mode)
    residual: float
    infinite: set  # labels with unbounded regions (plane mode)


class UnboundedRegionError(RuntimeError):
    pass


def region_areas(net: LabeledNetwork, allow_infinite=True):
    """Exact per-label areas by trapezoid sweep over vertical slabs.

    Within a slab every covering segment is linear; consecutive crossings in y
    bound a constant-label trapezoid.  On the torus the crossing order is
    cyclic in y mod 1 and the slabs tile [0,1).  In the plane the strips below
    the lowest and above the highest crossing (and slabs with no crossings)
    belong to unbounded regions; they are clipped to the bounding box and the
    labels are flagged infinite.
    """
    dom = net.domain
    p0, p1, _, lefts, rights = net.segment_arrays()
    areas = {lab: 0.0 for lab in range(1, net.n_labels + 1)}
    residual = 0.0
    infinite = set()

    if len(p0) == 0:
        if net.n_labels == 1:
            areas[1] = dom.area
        else:
            residual = dom.area
        return RegionAreaTable(areas, residual, infinite)

    if dom.periodic:
        # shift each segment so its left endpoint is in [0,1), then split any
        # piece that pokes over an x-integer boundary
        segs = []
        for a, b, L, R in zip(p0, p1, lefts, rights):
            if b[0] < a[0]:
                a, b, L, R = b, a, R, L  # orient left-to-right in x
            sx = np.floor(a[0])
            a = a - [sx, 0.0]
            b = b - [sx, 0.0]
            if b[0] > 1.0 + 1e-15 and b[0] - 1.0 > 1e-15:
                t = (1.0 - a[0]) / (b[0] - a[0])
                m = a + t * (b - a)
                segs.append((a, m, L, R))
                segs.append((m - [1.0, 0.0], b - [1.0, 0.0], L, R))
            else:
                segs.append((a, b, L, R))
        xs = np.unique(np.concatenate(
            [[0.0, 1.0]] + [[s[0][0], s[1][0]] for s in segs]))
        xs = xs[(xs >= -1e-15) & (xs <= 1.0 + 1e-15)]
        y_lo, y_hi = None, None
    else:
        segs = []
        for a, b, L, R in zip(p0, p1, lefts, rights):
            if b[0] < a[0]:
                a, b, L, R = b, a, R, L
            segs.append((a, b, L, R))
        x0, y_lo, x1, y_hi = net.domain.bbox
        xs = np.unique(np.concatenate(
            [[x0, x1]] + [[s[0][0], s[1][0]] for s in segs]))

    seg_a = np.array([s[0] for s in segs])
    seg_b = np.array([s[1] for s in segs])
    seg_L = np.array([s[2] for s in segs])
    seg_R = np.array([s[3] for s in segs])

    for xl, xr in zip(xs[:-1], xs[1:]):
        w = xr - xl
        if w <= 1e-15:
            continue
        xm = 0.5 * (xl + xr)
        cover = (seg_a[:, 0] < xm) & (seg_b[:, 0] > xm)
        idx = np.nonzero(cover)[0]
        if len(idx) == 0:
            if dom.periodic:
                residual += w  # no information in this strip
            else:
                residual += w * (y_hi - y_lo)
            continue
        a = seg_a[idx]
        b = seg_b[idx]
        t = (xm - a[:, 0]) / (b[:, 0] - a[:, 0])
        ym = a[:, 1] + t * (b[:, 1] - a[:, 1])
        above = np.where(True, seg_L[idx], 0)  # dx > 0 by orientation
        below = seg_R[idx]
        if dom.periodic:
            ym = np.mod(ym, 1.0)
            order = np.argsort(ym, kind="stable")
            k = len(order)
            for q in range(k):
                lo = order[q]
                hi = order[(q + 1) % k]
                gap = ym[hi] - ym[lo] if q + 1 < k else (1.0 - ym[lo] + ym[hi])
                lab_lo, lab_hi = above[lo], below[hi]
                if lab_lo == lab_hi:
                    areas[int(lab_lo)] += w * gap
                else:
                    residual += w * gap
        else:
            order = np.argsort(ym, kind="stable")
            k = len(order)
            lo0 = order[0]
            hi0 = order[-1]
            infinite.add(int(below[lo0]))
            infinite.add(int(above[hi0]))
            areas[int(below[lo0])] += w * max(0.0, ym[lo0] - y_lo)
            areas[int(above[hi0])] += w * max(0.0, y_hi - ym[hi0])
            for q in range(k - 1):
                lo = order[q]
                hi = order[q + 1]
                gap = ym[hi] - ym[lo]
                lab_lo, lab_hi = above[lo], below[hi]
                if lab_lo == lab_hi:
                    areas[int(lab_lo)] += w * gap
                else:
                    residual += w * gap

    if infinite and not allow_infinite:
        raise UnboundedRegionError("unbounded regions: %s" % sorted(infinite))
    return RegionAreaTable(areas, residual, infinite)


# ---- face tracing -------------------------------------------------------------


def _trace_key(edge_id, forward):
    return (edge_id, forward)


def region_loops(net: LabeledNetwork, label):
    """Boundary loops of a label's region as unwrapped coordinate arrays.

    Each loop keeps the region on its left; in the plane a positively oriented
    (counterclockwise) loop is an outer boundary and a negative one a hole.
    """
    ends = net.outgoing_ends()
    # successor lookup: at each vertex sort outgoing ends by angle
    by_vertex = {}
    for vi, lst in ends.items():
        angles = np.array([np.arctan2(d[1], d[0]) for d, _, _, _, _ in lst])
        order = np.argsort(angles)
        by_vertex[vi] = [lst[o] for o in order]

    def successor(vi, d_in):
        """Next outgoing end continuing the face left of the arrival direction."""
        lst = by_vertex[vi]
        rev = np.arctan2(-d_in[1], -d_in[0])
        angs = [np.arctan2(d[1], d[0]) for d, _, _, _, _ in lst]
        # first end strictly clockwise of the reversal (cyclically)
        best, best_gap = None, None
        for cand, a in zip(lst, angs):
            gap = (rev - a) % (2.0 * np.pi)
            if gap < 1e-12:
                gap = 2.0 * np.pi  # the reversal itself: only if nothing else
            if best_gap is None or gap < best_gap:
                best, best_gap = cand, gap
        return best

    pending = set()
    for ei, e in enumerate(net.edges):
        if e.left == label:
            pending.add(_trace_key(ei, True))
        if e.right == label:
            pending.add(_trace_key(ei, False))

    loops = []
    while pending:
        key = next(iter(pending))
        loop_pts = []
        cur = key
        while True:
            if cur not in pending:
                break  # arrived at an already-consumed branch; degenerate input
            pending.discard(cur)
            ei, forward = cur
            chain = net.edges[ei].chain if forward else tuple(reversed(net.edges[ei].chain))
            pts = net.vertices[list(chain)]
            # unwrap relative to the running end point
            if loop_pts:
                base = loop_pts[-1]
            else:
                base = pts[0]
            unwrapped = [base + net.domain.delta(net.vertices[chain[0]], net.vertices[chain[0]]) * 0]
            unwrapped[0] = np.asarray(base, dtype=float)
            for a, b in zip(chain[:-1], chain[1:]):
                step = net.domain.delta(net.vertices[a], net.vertices[b])
                unwrapped.append(unwrapped[-1] + step)
            if not loop_pts:
                loop_pts.extend(unwrapped)
            else:
                loop_pts.extend(unwrapped[1:])
            v_end = chain[-1]
            d_in = unwrapped[-1] - unwrapped[-2]
            nxt = successor(v_end, d_in)
            d, _, _, nei, nfwd = nxt
            cur = _trace_key(nei, nfwd)
            if cur == key:
                break
        if len(loop_pts) >= 3:
            loops.append(np.asarray(loop_pts))
    return loops


def shoelace(points):
    x = points[:, 0]
    y = points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def label_at_points(net: LabeledNetwork, points):
    """Label of the region containing each point, by nearest-boundary side."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    p0, p1, _, lefts, rights = net.segment_arrays()
    if len(p0) == 0:
        return np.full(len(points), 1)
    # bound the (N, S, 2) point-segment temporaries
    block = max(1, 2_000_000 // max(1, len(p0)))
    if len(points) > block:
        return np.concatenate([label_at_points(net, points[i:i + block])
                               for i in range(0, len(points), block)])
    d = p1 - p0  # (S,2)
    ll = np.sum(d * d, axis=1)
    # displacement of each point from each segment start (torus aware)
    rel = net.domain.delta(p0[None, :, :], points[:, None, :])  # (N,S,2)
    t = np.clip(np.einsum("nsk,sk->ns", rel, d) / ll[None, :], 0.0, 1.0)
    closest = t[..., None] * d[None, :, :]
    off = rel - closest
    dist = np.sqrt(np.sum(off * off, axis=-1))
    cross = d[None, :, 0] * off[..., 1] - d[None, :, 1] * off[..., 0]
    # prefer the most transversal segment among near-ties (junction vicinity)
    near = dist <= (np.min(dist, axis=1, keepdims=True) + 1e-12)
    score = np.where(near, np.abs(cross), -1.0)
    pick = np.argmax(score, axis=1)
    side = cross[np.arange(len(points)), pick] > 0.0
    return np.where(side, lefts[pick], rights[pick])


# ---- remesh -------------------------------------------------------------------


class RemeshCollisionError(RuntimeError):
    pass


def remesh(net: LabeledNetwork, h_min=None, h_max=None):
    """Split long segments at midpoints, merge short interior chains.

    Splitting is exact (area and length preserved); merging drops interior
    chain vertices, moving the boundary by at most h_min and never touching
    junction vertices.  A junction-to-junction chain that is a single short
    segment is left alone (welding junctions is a separate, explicit event).
    """
    scale = net.scale
    if h_min is None:
        h_min = scale.h_min
    if h_max is None:
        h_max = scale.h_max
    dom = net.domain
    verts = [v for v in net.vertices]
    new_edges = []
    deg = net.vertex_degrees()

    for e in net.edges:
        chain = list(e.chain)
        closed = chain[0] == chain[-1]
        # pass 1: merge runs of short segments by dropping interior vertices
        out = [chain[0]]
        acc = 0.0
        for a, b in zip(chain[:-1], chain[1:]):
            step = float(np.linalg.norm(dom.delta(net.vertices[out[-1]], net.vertices[b])))
            seg = float(np.linalg.norm(dom.delta(net.vertices[a], net.vertices[b])))
            is_last = b == chain[-1]
            # keep once the accumulated step reaches h_min, or the segment
            # itself is long enough; dropping whole runs of short segments
            # would move the boundary without bound
            keep = seg >= h_min or step >= h_min or is_last or deg[b] != 2
            if keep:
                out.append(b)
            # else: drop b, merging its two segments
        chain = out
        if closed and len(chain) < 4 and len(set(chain)) < 3:
            # do not let a loop degenerate below a triangle
            chain = list(e.chain)
        # pass 2: recursive midpoint split of long segments
        final = [chain[0]]
        for a, b in zip(chain[:-1], chain[1:]):
            pa = np.asarray(verts[a], dtype=float)
            step = dom.delta(pa, net.vertices[b])
            length = float(np.linalg.norm(step))
            pieces = 1
            while length / pieces > h_max:
                pieces *= 2
            for k in range(1, pieces):
                p = dom.wrap(pa + step * (k / pieces))
                verts.append(p)
                final.append(len(verts) - 1)
            final.append(b)
        new_edges.append(Edge(tuple(final), e.left, e.right))

    out_net = LabeledNetwork(net.domain, net.n_labels,
                             np.asarray(verts, dtype=float), new_edges, net.scale)
    return compact(out_net)


def compact(net: LabeledNetwork):
    """Drop unused vertices and reindex chains."""
    used = np.zeros(len(net.vertices), dtype=bool)
    for e in net.edges:
        used[list(e.chain)] = True
    idx = np.cumsum(used) - 1
    verts = net.vertices[used]
    edges = [Edge(tuple(int(idx[i]) for i in e.chain), e.left, e.right)
             for e in net.edges]
    return LabeledNetwork(net.domain, net.n_labels, verts, edges, net.scale)


def weld_junctions(net: LabeledNetwork):
    """Collapse junction-to-junction chains shorter than the weld tolerance.

    Two triple junctions colliding produce a degree-4 vertex which the next
    deformation step breaks up again; this is how network grains disappear.
    """
    deg = net.vertex_degrees()
    for ei, e in enumerate(net.edges):
        c = e.chain
        if c[0] == c[-1]:
            continue
        if deg[c[0]] >= 3 and deg[c[-1]] >= 3:
            length = 0.0
            for a, b in zip(c[:-1], c[1:]):
                length += float(np.linalg.norm(net.domain.delta(
                    net.vertices[a], net.vertices[b])))
            if length < net.scale.weld:
                keep, drop = c[0], c[-1]
                mid = net.domain.wrap(net.vertices[keep] + 0.5 * net.domain.delta(
                    net.vertices[keep], net.vertices[drop]))
                verts = net.vertices.copy()
                verts[keep] = mid
                edges = []
                for fj, f in enumerate(net.edges):
                    if fj == ei:
                        continue
                    chain = tuple(keep if i == drop else i for i in f.chain)
                    edges.append(Edge(chain, f.left, f.right))
                merged = compact(LabeledNetwork(net.domain, net.n_labels,
                                                verts, edges, net.scale))
                return weld_junctions(merged)  # handle cascades
    return net
