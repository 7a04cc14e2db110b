"""Frame and report serialization (CSV / SVG / JSONL), byte-stable."""

import json

import numpy as np

CSV_HEADER = "t,edge_id,x0,y0,x1,y1,label_left,label_right"

_PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]


def _g(x):
    return "%.17g" % x


def emit_frame(net, t, fmt="csv"):
    """Serialize one network snapshot; 17 significant digits, stable bytes."""
    if fmt == "csv":
        rows = [CSV_HEADER]
        p0, p1, eid, lefts, rights = net.segment_arrays()
        for i in range(len(p0)):
            rows.append(",".join([
                _g(t), str(int(eid[i])),
                _g(p0[i][0]), _g(p0[i][1]), _g(p1[i][0]), _g(p1[i][1]),
                str(int(lefts[i])), str(int(rights[i]))]))
        return ("\n".join(rows) + "\n").encode()
    if fmt == "svg":
        return _emit_svg(net, t)
    raise ValueError("unknown frame format %r" % fmt)


def _emit_svg(net, t):
    if net.domain.periodic:
        x0, y0, x1, y1 = 0.0, 0.0, 1.0, 1.0
    else:
        x0, y0, x1, y1 = net.domain.bbox
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<svg xmlns="http://www.w3.org/2000/svg" viewBox="%s %s %s %s">'
        % (_g(x0), _g(y0), _g(x1 - x0), _g(y1 - y0)),
        "<style>",
    ]
    for lab in range(1, net.n_labels + 1):
        lines.append(".label-%d { stroke: %s; fill: none; stroke-width: %s; }"
                     % (lab, _PALETTE[(lab - 1) % len(_PALETTE)],
                        _g(0.004 * max(x1 - x0, y1 - y0))))
    lines.append("</style>")
    lines.append('<g data-t="%s">' % _g(t))
    for ei, e in enumerate(net.edges):
        # draw each segment minimum-image unwrapped from its start
        pts = []
        prev = None
        for v in e.chain:
            p = net.vertices[v]
            if prev is not None:
                p = prev + net.domain.delta(prev, p)
            pts.append(p)
            prev = p
        coords = " ".join("%s,%s" % (_g(p[0]), _g(p[1])) for p in pts)
        lines.append('<polyline class="label-%d" data-edge="%d" '
                     'data-right="%d" points="%s"/>'
                     % (e.left, ei, e.right, coords))
    lines.append("</g>")
    lines.append("</svg>")
    return ("\n".join(lines) + "\n").encode()


def report_record(report):
    """One step report as a canonical JSON line."""
    rec = {
        "step": report.step,
        "t": report.t,
        "mass_pre": report.mass_pre,
        "mass_mid": report.mass_mid,
        "mass": report.mass_post,
        "energy": report.energy,
        "deformation_decrease": report.deformation_decrease,
        "max_displacement": report.max_displacement,
        "areas": {str(k): v for k, v in sorted(report.areas.items())},
        "violations": list(report.violations),
    }
    return json.dumps(rec, sort_keys=True) + "\n"
