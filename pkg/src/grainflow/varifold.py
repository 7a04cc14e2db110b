"""First variation, kernel convolutions, and the smoothed mean curvature.

The boundary varifold of a network is the unit-density 1-varifold carried by
its segments.  For a C^1 vector field g the first variation is

    dV(g) = int S . grad g dV,   S . grad g = tau^T (Jg) tau

computed by per-segment Gauss-Legendre quadrature (order 4, subintervals
capped by the mesh h_max, or by eps for kernel integrands so the Gaussian
scale is resolved; GL-4 at subinterval eps resolves it to ~1e-9 relative).

Convolutions of the weight measure and of the first variation,

    (Phi_eps * |V|)(y)  = int Phi_eps(x - y) d|V|(x)
    (Phi_eps * dV)(y)   = int S(grad Phi_eps(x - y)) dV(x, S)

feed the smoothed mean curvature

    h_tilde(y) = -(Phi_eps * dV)(y) / ((Phi_eps * |V|)(y) + eps / Omega(y))
    h_eps      = Phi_eps * h_tilde

where the outer convolution is a tensor-grid Riemann sum with spacing eps/4
truncated at radius min(1, 6 eps) around the carrier (beyond 6 eps the
Gaussian factor is below e^-18).  The L^2 curvature proxy is

    energy = int |Phi_eps * dV|^2 Omega / (Phi_eps * |V| + eps/Omega) dy.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .domain import Domain
from .kernels import Kernel
from .weights import WeightFunction

_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)

# bound for |h_tilde| and |h_eps| (rough pointwise estimate)
def curvature_sup_bound(eps):
    return 2.0 / (eps * eps)


@dataclass
class VarifoldView:
    domain: Domain
    p0: np.ndarray  # (S,2) segment starts
    p1: np.ndarray  # (S,2) segment ends, unwrapped next to p0
    tangent: np.ndarray  # (S,2) unit
    length: np.ndarray  # (S,)
    omega: WeightFunction
    h_sub: float = 0.05  # default quadrature subinterval cap
    v0: np.ndarray = None  # (S,) vertex index of p0, if built from a network
    v1: np.ndarray = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def total_mass(self):
        return float(np.sum(self.length))

    def quad_nodes(self, max_h=None):
        """Quadrature nodes: (points, weights, tangents, seg_index, t_param)."""
        if max_h is None:
            max_h = self.h_sub
        key = ("nodes", float(max_h))
        if key in self._cache:
            return self._cache[key]
        pts, wts, taus, sidx, tpar = [], [], [], [], []
        for i in range(len(self.length)):
            L = self.length[i]
            if L <= 0.0:
                continue
            k = max(1, int(np.ceil(L / max_h)))
            # gauss-legendre nodes on each of k equal subintervals
            for q in range(k):
                a = q / k
                b = (q + 1) / k
                t = 0.5 * (a + b) + 0.5 * (b - a) * _GL_X
                w = 0.5 * (b - a) * _GL_W * L
                p = self.p0[i][None, :] + t[:, None] * (self.p1[i] - self.p0[i])[None, :]
                pts.append(p)
                wts.append(w)
                taus.append(np.repeat(self.tangent[i][None, :], len(t), axis=0))
                sidx.append(np.full(len(t), i))
                tpar.append(t)
        if pts:
            out = (np.concatenate(pts), np.concatenate(wts), np.concatenate(taus),
                   np.concatenate(sidx), np.concatenate(tpar))
        else:
            out = (np.zeros((0, 2)), np.zeros(0), np.zeros((0, 2)),
                   np.zeros(0, dtype=int), np.zeros(0))
        self._cache[key] = out
        return out


def build_varifold_view(net, omega=None):
    """Unit-density varifold carried by the network's segments."""
    from .weights import const_weight
    p0, p1, _, _, _ = net.segment_arrays()
    d = p1 - p0
    length = np.linalg.norm(d, axis=1)
    keep = length > 0.0
    p0, p1, d, length = p0[keep], p1[keep], d[keep], length[keep]
    tangent = d / length[:, None]
    v0s, v1s = [], []
    for e in net.edges:
        c = list(e.chain)
        v0s.extend(c[:-1])
        v1s.extend(c[1:])
    v0s = np.asarray(v0s, dtype=int)[keep]
    v1s = np.asarray(v1s, dtype=int)[keep]
    return VarifoldView(net.domain, p0, p1, tangent, length,
                        omega if omega is not None else const_weight(),
                        h_sub=net.scale.h_max, v0=v0s, v1=v1s)


def omega_mass(V: VarifoldView, omega=None, max_h=None):
    """Omega-weighted total mass |V|(Omega) by segment quadrature."""
    if omega is None:
        omega = V.omega
    if omega.variant == "const":
        return V.total_mass
    x, w, _, _, _ = V.quad_nodes(max_h)
    return float(np.sum(w * omega.value(x)))


def first_variation(V: VarifoldView, g, max_h=None):
    """dV(g) = int tau^T (grad g) tau along the carrier."""
    x, w, tau, _, _ = V.quad_nodes(max_h)
    if len(x) == 0:
        return 0.0
    J = g.jacobian(x)  # (Q,2,2), J[i,k] = d_i g_k
    return float(np.sum(w * np.einsum("qi,qik,qk->q", tau, J, tau)))


def weighted_first_variation(V: VarifoldView, phi, g, max_h=None):
    """d(V, phi)(g) = int phi tau^T grad g tau dV + int g . grad phi d|V|."""
    x, w, tau, _, _ = V.quad_nodes(max_h)
    if len(x) == 0:
        return 0.0
    J = g.jacobian(x)
    term1 = np.sum(w * phi.value(x) * np.einsum("qi,qik,qk->q", tau, J, tau))
    term2 = np.sum(w * np.einsum("qk,qk->q", g.value(x), phi.grad(x)))
    return float(term1 + term2)


def weighted_first_variation_of_field(V: VarifoldView, phi, h_at_nodes, nodes_w,
                                      nodes_x):
    """d(V, phi)(h) = int (-phi |h|^2 + h . grad phi) d|V| for a sampled field h."""
    h2 = np.sum(h_at_nodes * h_at_nodes, axis=-1)
    val = -phi.value(nodes_x) * h2 + np.einsum(
        "qk,qk->q", h_at_nodes, phi.grad(nodes_x))
    return float(np.sum(nodes_w * val))


# ---- kernel-weighted accumulation --------------------------------------------

_PAIR_CHUNK = 4_000_000


def _kernel_cap(V, eps):
    # GL-4 on subintervals of size eps resolves the Gaussian scale to better
    # than 1e-9 relative; no need to go finer than the mesh already is
    return min(V.h_sub, eps)


def _node_tree(dom: Domain, pts):
    if dom.periodic:
        return cKDTree(np.mod(pts, 1.0), boxsize=1.0)
    return cKDTree(pts)


def _accumulate(dom, kernel, targets, nodes, node_w, node_tau,
                want_mass=True, want_fv=False):
    """Sum of kernel (and projected kernel-gradient) contributions at targets.

    Returns (mass, fv) with fv = None unless requested.  Displacements are
    node - target, minimum image on the torus; pairs beyond the truncation
    radius contribute below the e^-18 Gaussian floor and are skipped.
    """
    m = len(targets)
    mass = np.zeros(m) if want_mass else None
    fv = np.zeros((m, 2)) if want_fv else None
    if len(nodes) == 0 or m == 0:
        return mass, fv
    r = kernel.trunc_radius
    tree = _node_tree(dom, nodes)
    q = np.mod(targets, 1.0) if dom.periodic else targets
    # chunk target points so the flattened pair arrays stay bounded; probe a
    # sample for the neighbor count (area fractions misestimate thin carriers)
    probe = q[:: max(1, m // 256)][:256]
    counts = tree.query_ball_point(probe, r, return_length=True)
    approx_per = max(1, int(np.mean(counts)) if len(counts) else 1)
    step = max(64, _PAIR_CHUNK // approx_per)
    for lo in range(0, m, step):
        hi = min(m, lo + step)
        lists = tree.query_ball_point(q[lo:hi], r, workers=-1)
        counts = np.fromiter((len(l) for l in lists), dtype=int, count=hi - lo)
        if counts.sum() == 0:
            continue
        ti = np.repeat(np.arange(lo, hi), counts)
        ni = np.concatenate([np.asarray(l, dtype=int) for l in lists if l])
        d = dom.delta(targets[ti], nodes[ni])
        if want_fv:
            val, grad = kernel.value_grad(d)
            proj = np.einsum("pk,pk->p", node_tau[ni], grad)
            contrib = (node_w[ni] * proj)[:, None] * node_tau[ni]
            fv[:, 0] += np.bincount(ti, weights=contrib[:, 0], minlength=m)
            fv[:, 1] += np.bincount(ti, weights=contrib[:, 1], minlength=m)
            if want_mass:
                mass += np.bincount(ti, weights=node_w[ni] * val, minlength=m)
        else:
            val = kernel.value(d)
            mass += np.bincount(ti, weights=node_w[ni] * val, minlength=m)
    return mass, fv


def convolve_mass(V: VarifoldView, kernel: Kernel, y):
    """(Phi_eps * |V|) at point(s) y."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    x, w, tau, _, _ = V.quad_nodes(_kernel_cap(V, kernel.eps))
    mass, _ = _accumulate(V.domain, kernel, y, x, w, tau, want_mass=True)
    return mass if mass.shape[0] > 1 else float(mass[0])


def convolve_first_variation(V: VarifoldView, kernel: Kernel, y):
    """(Phi_eps * dV) at point(s) y: tangentially projected kernel gradient."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    x, w, tau, _, _ = V.quad_nodes(_kernel_cap(V, kernel.eps))
    _, fv = _accumulate(V.domain, kernel, y, x, w, tau,
                        want_mass=False, want_fv=True)
    return fv if fv.shape[0] > 1 else fv[0]


# ---- smoothing grid -----------------------------------------------------------


class QuadratureBudgetError(MemoryError):
    pass


@dataclass
class DenseLayout:
    """Row-major dense tensor grid: array index i maps to lattice index i + i0."""
    spacing: float
    i0: np.ndarray  # (2,) global lattice index of array cell (0,0)
    shape: tuple  # (nx, ny)
    k: int  # window radius in cells (= ceil(trunc_radius / spacing))
    m: int = 0  # lattice period in cells (torus), 0 on the plane


@dataclass
class SmoothingGrid:
    points: np.ndarray  # (G,2) grid points near the carrier
    cell: float  # cell area
    mass: np.ndarray  # Phi*|V| at grid points
    fv: np.ndarray  # Phi*dV at grid points
    h_tilde: np.ndarray  # (G,2)
    layout: DenseLayout = None  # set when the dense separable path was used


_MAX_GRID_POINTS = 12_000_000
_DENSE_CELL_CAP = 4_000_000
_SUPER = 8  # supercell edge (in grid cells) for the blocked separable path


def _dense_params(domain, eps, trunc_radius):
    """(spacing, k, m) for the dense path, or None when it does not apply.

    The separable factorization needs the cutoff profile to be identically 1
    over the whole square window, i.e. sqrt(2) * (r + 2 spacing) <= 1/2.
    """
    if domain.periodic:
        m = int(np.ceil(4.0 / eps))
        sp = 1.0 / m
    else:
        m = 0
        sp = eps / 4.0
    if np.sqrt(2.0) * (trunc_radius + 2.0 * sp) > 0.5:
        return None
    k = int(np.ceil(trunc_radius / sp))
    if m and (k + _SUPER >= m or m * m > _DENSE_CELL_CAP):
        return None
    return sp, k, m


def _group_slices(bidx, S=_SUPER):
    """Sort rows of bidx by supercell; yields (order, split boundaries)."""
    key = (bidx[:, 0] // S) * np.int64(1 << 32) + (bidx[:, 1] // S)
    order = np.argsort(key, kind="stable")
    ks = key[order]
    cuts = np.nonzero(np.diff(ks))[0] + 1
    return order, np.concatenate([[0], cuts, [len(ks)]])


def _gauss_axis(eps, dx):
    """Separable Gaussian rows and the rows for the (node - grid) gradient."""
    e2 = eps * eps
    g = np.exp(dx * dx / (-2.0 * e2))
    return g, (dx / e2) * g


def _accumulate_blocks(xq, w, tau, eps, cconst, sp, i0, shape, k, S=_SUPER):
    """Scatter separable Gaussian windows of the given nodes into dense arrays.

    xq must already live in the array's unwrapped coordinate frame (array cell
    index = floor(x / sp) - i0); every window must fit inside `shape`.
    Returns (mass, fvx, fvy).
    """
    mass = np.zeros(shape)
    fvx = np.zeros(shape)
    fvy = np.zeros(shape)
    bidx = np.floor(xq / sp).astype(np.int64) - i0
    order, cuts = _group_slices(bidx, S)
    W = S + 2 * k
    offs = np.arange(W)
    for a, b in zip(cuts[:-1], cuts[1:]):
        sel = order[a:b]
        lox = int(bidx[sel[0], 0] // S) * S - k
        loy = int(bidx[sel[0], 1] // S) * S - k
        cx = (lox + offs + i0[0] + 0.5) * sp
        cy = (loy + offs + i0[1] + 0.5) * sp
        gx, gxd = _gauss_axis(eps, cx[None, :] - xq[sel, 0:1])
        gy, gyd = _gauss_axis(eps, cy[None, :] - xq[sel, 1:2])
        wq = w[sel] * cconst
        tx, ty = tau[sel, 0], tau[sel, 1]
        mass[lox:lox + W, loy:loy + W] += (wq[:, None] * gx).T @ gy
        axx = (wq * tx * tx)[:, None]
        axy = (wq * tx * ty)[:, None]
        ayy = (wq * ty * ty)[:, None]
        fvx[lox:lox + W, loy:loy + W] += (axx * gxd).T @ gy + (axy * gx).T @ gyd
        fvy[lox:lox + W, loy:loy + W] += (axy * gxd).T @ gy + (ayy * gx).T @ gyd
    return mass, fvx, fvy


def _dense_accumulate(V: VarifoldView, kernel: Kernel, params):
    """Phi*|V| and Phi*dV on the full dense grid via separable block sums."""
    sp, k, m = params
    eps = kernel.eps
    x, w, tau, _, _ = V.quad_nodes(_kernel_cap(V, eps))
    if m:
        xq = np.mod(x, 1.0)
    else:
        xq = x
    base = np.floor(xq / sp).astype(np.int64)
    pad = k + _SUPER
    if m:
        i0 = np.array([-pad, -pad])
        shape = (m + 2 * pad, m + 2 * pad)
    else:
        i0 = base.min(axis=0) - pad
        hi = base.max(axis=0) + pad
        shape = (int(hi[0] - i0[0] + 1), int(hi[1] - i0[1] + 1))
        if shape[0] * shape[1] > _DENSE_CELL_CAP:
            return None
    cconst = kernel.c_eps / (2.0 * np.pi * eps * eps)
    mass, fvx, fvy = _accumulate_blocks(xq, w, tau, eps, cconst, sp, i0,
                                        shape, k)
    if m:
        mass = _fold_torus(mass, m, pad)
        fvx = _fold_torus(fvx, m, pad)
        fvy = _fold_torus(fvy, m, pad)
        i0 = np.array([0, 0])
        shape = (m, m)
    fv = np.stack([fvx.ravel(), fvy.ravel()], axis=1)
    ii = np.arange(shape[0]) + i0[0]
    jj = np.arange(shape[1]) + i0[1]
    gx, gy = np.meshgrid((ii + 0.5) * sp, (jj + 0.5) * sp, indexing="ij")
    points = np.column_stack([gx.ravel(), gy.ravel()])
    layout = DenseLayout(sp, i0, shape, k, m)
    return points, mass.ravel(), fv, layout


def _fold_torus(arr, m, pad):
    """Fold a padded periodic accumulation array back onto the m x m core."""
    for axis in (0, 1):
        a = np.moveaxis(arr, axis, 0)
        a[pad:2 * pad] += a[pad + m:]
        a[m:m + pad] += a[:pad]
        arr = np.moveaxis(a, 0, axis)
    sl = (slice(pad, pad + m), slice(pad, pad + m))
    return np.ascontiguousarray(arr[sl])


def smoothing_grid(V: VarifoldView, kernel: Kernel, omega: WeightFunction):
    """h_tilde sampled on an eps/4 tensor grid covering the carrier halo.

    Only lattice cells near the carrier are ever materialized: nodes are
    snapped to coarse blocks of ~trunc_radius size, the 3x3 block neighborhood
    is expanded into fine cells, and the result is distance-filtered.  This
    keeps tiny-eps torus runs (a 4/eps x 4/eps full lattice would not fit)
    proportional to the carrier length instead of the domain area.
    """
    key = ("grid", kernel.eps, omega.variant)
    if key in V._cache:
        return V._cache[key]
    eps = kernel.eps
    r = kernel.trunc_radius
    x, w, tau, _, _ = V.quad_nodes(_kernel_cap(V, eps))
    params = _dense_params(V.domain, eps, r) if len(x) else None
    if params is not None:
        dense = _dense_accumulate(V, kernel, params)
        if dense is not None:
            points, mass, fv, layout = dense
            denom = mass + eps * omega.inv_value(points)
            out = SmoothingGrid(points, layout.spacing ** 2, mass, fv,
                                -fv / denom[:, None], layout)
            V._cache[key] = out
            return out
    if V.domain.periodic:
        m = int(np.ceil(4.0 / eps))
        spacing = 1.0 / m
    else:
        m = None
        spacing = eps / 4.0
    k = max(1, int(np.ceil(r / spacing)))
    block = k * spacing
    coarse = np.unique(np.floor(np.mod(x, 1.0) / block).astype(np.int64)
                       if m else np.floor(x / block).astype(np.int64), axis=0)
    off = np.array([[i, jj] for i in (-1, 0, 1) for jj in (-1, 0, 1)])
    coarse = np.unique((coarse[:, None, :] + off[None, :, :]).reshape(-1, 2),
                       axis=0)
    if len(coarse) * k * k > 4 * _MAX_GRID_POINTS:
        raise QuadratureBudgetError("smoothing grid exceeds memory cap")
    sub = np.array([[a, b] for a in range(k) for b in range(k)], dtype=np.int64)
    idx = (coarse[:, None, :] * k + sub[None, :, :]).reshape(-1, 2)
    if m:
        idx = np.mod(idx, m)
        idx = np.unique(idx, axis=0)
    grid = (idx + 0.5) * spacing
    # keep only grid points within the truncation halo of the carrier
    tree = _node_tree(V.domain, x)
    gq = np.mod(grid, 1.0) if V.domain.periodic else grid
    dist, _ = tree.query(gq, k=1, distance_upper_bound=r + spacing)
    grid = grid[np.isfinite(dist)]
    if len(grid) > _MAX_GRID_POINTS:
        raise QuadratureBudgetError("smoothing grid exceeds memory cap")
    mass, fv = _accumulate(V.domain, kernel, grid, x, w, tau,
                           want_mass=True, want_fv=True)
    denom = mass + eps * omega.inv_value(grid)
    h_tilde = -fv / denom[:, None]
    out = SmoothingGrid(grid, spacing * spacing, mass, fv, h_tilde)
    V._cache[key] = out
    return out


def h_tilde_at(V, kernel, omega, points):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    x, w, tau, _, _ = V.quad_nodes(_kernel_cap(V, kernel.eps))
    mass, fv = _accumulate(V.domain, kernel, points, x, w, tau,
                           want_mass=True, want_fv=True)
    denom = mass + kernel.eps * omega.inv_value(points)
    return -fv / denom[:, None]


def _dense_gather(sg, kernel, points):
    """Phi * h_tilde at points via the dense layout; None entries -> fallback."""
    lay = sg.layout
    sp, k, per = lay.spacing, lay.k, lay.m
    eps = kernel.eps
    H = sg.h_tilde.reshape(lay.shape + (2,))
    if per:
        pad = k + _SUPER
        H = np.pad(H, ((pad, pad), (pad, pad), (0, 0)), mode="wrap")
        i0 = lay.i0 - pad
        q = np.mod(points, 1.0)
    else:
        i0 = lay.i0
        q = points
    scale = kernel.c_eps / (2.0 * np.pi * eps * eps) * sg.cell
    return _gather_blocks(H, i0, sp, k, eps, scale, q)


def _gather_blocks(H, i0, sp, k, eps, scale, q, S=_SUPER):
    """Separable Gaussian gather of the field H at the points q.

    Returns (values, miss) where miss marks points whose window does not fit
    inside H (the caller falls back for those).
    """
    nx, ny = H.shape[:2]
    bidx = np.floor(q / sp).astype(np.int64) - i0
    W = S + 2 * k
    lox = (bidx[:, 0] // S) * S - k
    loy = (bidx[:, 1] // S) * S - k
    ok = (lox >= 0) & (loy >= 0) & (lox + W <= nx) & (loy + W <= ny)
    h = np.zeros((len(q),) + H.shape[2:])
    offs = np.arange(W)
    order, cuts = _group_slices(bidx[ok], S)
    okid = np.nonzero(ok)[0]
    for a, b in zip(cuts[:-1], cuts[1:]):
        sel = okid[order[a:b]]
        lx, ly = int(lox[sel[0]]), int(loy[sel[0]])
        cx = (lx + offs + i0[0] + 0.5) * sp
        cy = (ly + offs + i0[1] + 0.5) * sp
        gx, _ = _gauss_axis(eps, cx[None, :] - q[sel, 0:1])
        gy, _ = _gauss_axis(eps, cy[None, :] - q[sel, 1:2])
        block = H[lx:lx + W, ly:ly + W]
        h[sel] = np.einsum("ni,ij...,nj->n...", gx, block, gy) * scale
    return h, ~ok


def h_eps_at(V, kernel, omega, points, want_jacobian=False):
    """h_eps = Phi_eps * h_tilde at the given points (optionally its Jacobian)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    sg = smoothing_grid(V, kernel, omega)
    m = len(points)
    h = np.zeros((m, 2))
    J = np.zeros((m, 2, 2)) if want_jacobian else None
    if len(sg.points) == 0:
        return (h, J) if want_jacobian else h
    if sg.layout is not None and not want_jacobian:
        h, miss = _dense_gather(sg, kernel, points)
        if not miss.any():
            return h
        sub = _h_eps_sparse(V, kernel, sg, points[miss], False)
        h[miss] = sub
        return h
    return _h_eps_sparse(V, kernel, sg, points, want_jacobian)


def _h_eps_sparse(V, kernel, sg, points, want_jacobian):
    m = len(points)
    h = np.zeros((m, 2))
    J = np.zeros((m, 2, 2)) if want_jacobian else None
    tree = _node_tree(V.domain, sg.points)
    q = np.mod(points, 1.0) if V.domain.periodic else points
    r = kernel.trunc_radius
    step = max(16, _PAIR_CHUNK // max(1, int(len(sg.points) * min(1.0, 8 * r * r))))
    for lo in range(0, m, step):
        hi = min(m, lo + step)
        lists = tree.query_ball_point(q[lo:hi], r, workers=-1)
        counts = np.fromiter((len(l) for l in lists), dtype=int, count=hi - lo)
        if counts.sum() == 0:
            continue
        ti = np.repeat(np.arange(lo, hi), counts)
        gi = np.concatenate([np.asarray(l, dtype=int) for l in lists if l])
        d = V.domain.delta(points[ti], sg.points[gi])  # grid - point
        if want_jacobian:
            val, grad = kernel.value_grad(d)
            # d/dx Phi(g - x) = -(grad Phi)(g - x)
            contrib_j = -grad[:, :, None] * sg.h_tilde[gi][:, None, :] * sg.cell
            for a in range(2):
                for b in range(2):
                    J[:, a, b] += np.bincount(ti, weights=contrib_j[:, a, b],
                                              minlength=m)
        else:
            val = kernel.value(d)
        contrib = val[:, None] * sg.h_tilde[gi] * sg.cell
        h[:, 0] += np.bincount(ti, weights=contrib[:, 0], minlength=m)
        h[:, 1] += np.bincount(ti, weights=contrib[:, 1], minlength=m)
    return (h, J) if want_jacobian else h


def l2_energy(V: VarifoldView, kernel: Kernel, omega: WeightFunction, phi=None):
    """int phi |Phi*dV|^2 / (Phi*|V| + eps/Omega) dy (phi defaults to Omega)."""
    sg = smoothing_grid(V, kernel, omega)
    if len(sg.points) == 0:
        return 0.0
    denom = sg.mass + kernel.eps * omega.inv_value(sg.points)
    weight = omega.value(sg.points) if phi is None else phi.value(sg.points)
    fv2 = np.sum(sg.fv * sg.fv, axis=1)
    return float(np.sum(weight * fv2 / denom) * sg.cell)


def curvature_and_energy(V: VarifoldView, kernel: Kernel, omega: WeightFunction,
                         points):
    """(h_eps at points, L^2 energy) choosing the cheapest valid scheme.

    Lattices too large to materialize (paper-faithful eps on the torus) are
    swept in column slabs with separable block accumulation; everything else
    goes through the cached smoothing grid.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    eps = kernel.eps
    r = kernel.trunc_radius
    if (V.domain.periodic and ("grid", eps, omega.variant) not in V._cache
            and _dense_params(V.domain, eps, r) is None
            and np.sqrt(2.0) * (r + 2.0 / np.ceil(4.0 / eps)) <= 0.5):
        return _slab_h_and_energy(V, kernel, omega, points)
    h = h_eps_at(V, kernel, omega, points)
    return h, l2_energy(V, kernel, omega)


_SLAB_SUPER = 32


def _slab_h_and_energy(V, kernel, omega, targets):
    """Column-slab sweep over a torus lattice too large to hold in memory.

    Each slab owns lattice columns [c0, c1); nodes within 2k columns are
    selected (making columns [c0-k, c1+k) exact), rows are clustered so that
    only bands near the carrier are materialized, and both the energy sum and
    the h gather for the slab's own targets are taken per cluster.
    """
    eps = kernel.eps
    k_r = kernel.trunc_radius
    m = int(np.ceil(4.0 / eps))
    sp = 1.0 / m
    k = int(np.ceil(k_r / sp))
    S = _SLAB_SUPER
    x, w, tau, _, _ = V.quad_nodes(_kernel_cap(V, eps))
    xq = np.mod(x, 1.0)
    q = np.mod(targets, 1.0)
    bx = np.floor(xq[:, 0] / sp).astype(np.int64)
    by = np.floor(xq[:, 1] / sp).astype(np.int64)
    tbx = np.floor(q[:, 0] / sp).astype(np.int64)
    tby = np.floor(q[:, 1] / sp).astype(np.int64)
    cconst = kernel.c_eps / (2.0 * np.pi * eps * eps)
    const_w = omega.variant == "const"
    T = max(4 * k, S)
    h_out = np.zeros((len(q), 2))
    energy = 0.0
    for c0 in range(0, m, T):
        c1 = min(m, c0 + T)
        # circularly remapped column indices relative to this slab
        nb = c0 - 2 * k + np.mod(bx - (c0 - 2 * k), m)
        nsel = np.nonzero(nb < c1 + 2 * k)[0]
        if len(nsel) == 0:
            continue
        tb = c0 + np.mod(tbx - c0, m)
        tsel = np.nonzero(tb < c1)[0]
        # row clustering: cut the circle at its largest empty gap, then split
        # at gaps wider than the interaction range
        rows = np.unique(by[nsel])
        if len(rows) > 1:
            gaps = np.diff(rows)
            wrap_gap = rows[0] + m - rows[-1]
            gi = int(np.argmax(gaps))
            if gaps[gi] > wrap_gap:
                rmin = int(rows[gi + 1])
            else:
                rmin = int(rows[0])
        else:
            rmin = int(rows[0])
        nrow = rmin + np.mod(by[nsel] - rmin, m)
        trow = rmin + np.mod(tby[tsel] - rmin, m)
        order = np.argsort(nrow)
        srow = nrow[order]
        bnd = np.nonzero(np.diff(srow) > 2 * k + 2)[0] + 1
        starts = np.concatenate([[0], bnd, [len(srow)]])
        col_lo = c0 - 3 * k - S
        ncols = (c1 + 3 * k + S) - col_lo + 1
        for a, b in zip(starts[:-1], starts[1:]):
            cl = nsel[order[a:b]]
            cmin, cmax = int(srow[a]), int(srow[b - 1])
            r_lo = cmin - k - S
            nrows = (cmax + k + S) - r_lo + 1
            i0 = np.array([col_lo, r_lo])
            shape = (int(ncols), int(nrows))
            xs_cl = xq[cl, 0] + (nb[cl] - bx[cl]) * sp
            ys_cl = xq[cl, 1] + (rmin + np.mod(by[cl] - rmin, m) - by[cl]) * sp
            xy = np.column_stack([xs_cl, ys_cl])
            mass, fvx, fvy = _accumulate_blocks(xy, w[cl], tau[cl], eps,
                                                cconst, sp, i0, shape, k, S)
            if const_w:
                denom = mass + eps
                weight = 1.0
                inv_own = None
            else:
                ii = (np.arange(shape[0]) + i0[0] + 0.5) * sp
                jj = (np.arange(shape[1]) + i0[1] + 0.5) * sp
                gxp, gyp = np.meshgrid(ii, jj, indexing="ij")
                pts = np.stack([np.mod(gxp, 1.0), np.mod(gyp, 1.0)], axis=-1)
                denom = mass + eps * omega.inv_value(pts)
                weight = omega.value(pts)
            own = slice(c0 - col_lo, c1 - col_lo)
            f2 = fvx[own] ** 2 + fvy[own] ** 2
            wslice = weight if const_w else weight[own]
            energy += float(np.sum(wslice * f2 / denom[own]) * sp * sp)
            # gather h for this slab's targets lying in this row cluster;
            # clusters are > 2k+2 rows apart, so +-k assigns each target to
            # at most one cluster (farther targets keep the correct h = 0)
            tmask = (trow >= cmin - k) & (trow <= cmax + k)
            tcl = tsel[tmask]
            if len(tcl) == 0:
                continue
            H = np.stack([-fvx / denom, -fvy / denom], axis=-1)
            tloc = trow[tmask]
            tq = np.column_stack([
                q[tcl, 0] + (tb[tcl] - tbx[tcl]) * sp,
                q[tcl, 1] + (tloc - tby[tcl]) * sp])
            vals, miss = _gather_blocks(H, i0, sp, k, eps,
                                        cconst * sp * sp, tq, S)
            h_out[tcl] = vals
    return h_out, energy


@dataclass
class CurvatureField:
    points: np.ndarray
    h_tilde: np.ndarray
    h_eps: np.ndarray
    energy: float
    eps: float

    @property
    def sup_bound(self):
        return curvature_sup_bound(self.eps)

    def bound_violations(self):
        out = []
        b = self.sup_bound
        if len(self.h_tilde) and np.max(np.linalg.norm(self.h_tilde, axis=1)) > b:
            out.append("h_tilde exceeds 2/eps^2")
        if len(self.h_eps) and np.max(np.linalg.norm(self.h_eps, axis=1)) > b:
            out.append("h_eps exceeds 2/eps^2")
        return out


def smoothed_mean_curvature(V: VarifoldView, kernel: Kernel,
                            omega: WeightFunction, points):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    ht = h_tilde_at(V, kernel, omega, points)
    h = h_eps_at(V, kernel, omega, points)
    energy = l2_energy(V, kernel, omega)
    return CurvatureField(points, ht, h, energy, kernel.eps)


# ---- motion-law consistency terms ----------------------------------------------


@dataclass
class MotionLawTerms:
    """Constituents of the smoothed-motion-law inequalities.

    Tests recombine these (including with deliberately flipped signs for
    mutation checks) rather than this module asserting anything.
    """
    pairing_measure: float  # int h_eps . g d|V|
    pairing_space: float  # int (Phi*dV) . g dy
    first_variation_g: float  # dV(g)
    smoothed_fv_weighted: float  # dV(phi h_eps)
    weighted_energy: float  # int phi |Phi*dV|^2/(den) dy
    curvature_sq_weighted: float  # int |h_eps|^2 phi d|V|
    energy: float  # weighted_energy with phi = Omega


def motion_law_terms(V, kernel, omega, g=None, phi=None):
    x, w, tau, _, _ = V.quad_nodes(_kernel_cap(V, kernel.eps))
    sg = smoothing_grid(V, kernel, omega)
    h_nodes, J_nodes = h_eps_at(V, kernel, omega, x, want_jacobian=True)
    energy = l2_energy(V, kernel, omega)

    pairing_measure = pairing_space = fvg = 0.0
    if g is not None:
        gx = g.value(x)
        pairing_measure = float(np.sum(w * np.einsum("qk,qk->q", h_nodes, gx)))
        g_grid = g.value(sg.points)
        pairing_space = float(np.sum(np.einsum("qk,qk->q", sg.fv, g_grid)) * sg.cell)
        fvg = first_variation(V, g, max_h=_kernel_cap(V, kernel.eps))

    smoothed_fv_weighted = weighted_energy = curvature_sq_weighted = 0.0
    if phi is not None:
        phix = phi.value(x)
        gphix = phi.grad(x)
        # dV(phi h) = int phi tau^T J_h tau + (tau . grad phi)(tau . h)
        core = phix * np.einsum("qi,qik,qk->q", tau, J_nodes, tau)
        core = core + np.einsum("qk,qk->q", tau, gphix) * np.einsum(
            "qk,qk->q", tau, h_nodes)
        smoothed_fv_weighted = float(np.sum(w * core))
        weighted_energy = l2_energy(V, kernel, omega, phi=phi)
        curvature_sq_weighted = float(np.sum(
            w * phix * np.sum(h_nodes * h_nodes, axis=1)))
    return MotionLawTerms(pairing_measure, pairing_space, fvg,
                          smoothed_fv_weighted, weighted_energy,
                          curvature_sq_weighted, energy)
