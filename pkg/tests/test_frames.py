import json

import numpy as np

from grainflow.domain import plane
from grainflow.engine import StepReport
from grainflow.frames import CSV_HEADER, emit_frame, report_record
from grainflow.network import Edge, LabeledNetwork
from grainflow.scenes import parse_scene


def unit_segment_net():
    v = np.array([[0.0, 0.0], [1.0, 0.0]])
    return LabeledNetwork(plane(), 2, v, [Edge((0, 1), 1, 2)])


def test_csv_single_row_golden():
    out = emit_frame(unit_segment_net(), 0.0, "csv").decode()
    assert out == CSV_HEADER + "\n" + "0,0,0,0,1,0,1,2" + "\n"


def test_csv_empty_network_header_only():
    net = LabeledNetwork(plane(), 1, np.zeros((0, 2)), [])
    assert emit_frame(net, 0.0, "csv").decode() == CSV_HEADER + "\n"


def test_csv_17_digits_roundtrip():
    v = np.array([[1.0 / 3.0, 0.1], [np.pi / 4.0, 2.0 / 7.0]])
    net = LabeledNetwork(plane(), 2, v, [Edge((0, 1), 1, 2)])
    row = emit_frame(net, 1e-7, "csv").decode().splitlines()[1].split(",")
    assert float(row[2]) == v[0][0] and float(row[5]) == v[1][1]


def test_svg_structure_and_stability():
    net = parse_scene("domain plane bbox=(-1.5,-1.5,1.5,1.5)\nlabels 2\n"
                      "circle center=(0,0) r=1 n=64 inside=1 outside=2\n")
    a = emit_frame(net, 0.5, "svg")
    b = emit_frame(net, 0.5, "svg")
    assert a == b
    s = a.decode()
    assert s.count("<polyline") == len(net.edges)
    assert 'class="label-1"' in s and ".label-2 {" in s


def test_report_record_canonical():
    rep = StepReport(step=3, t=0.0003, mass_pre=2.0, mass_mid=1.9,
                     mass_post=1.89, energy=5.0, deformation_decrease=0.1,
                     max_displacement=1e-5, areas={2: 0.5, 1: 0.5},
                     violations=[])
    line = report_record(rep)
    assert line.endswith("\n")
    rec = json.loads(line)
    assert rec["step"] == 3 and rec["mass"] == 1.89
    assert list(rec["areas"]) == ["1", "2"]
    # canonical: serializing twice is byte-identical
    assert report_record(rep) == line
