import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_netlist, random_instance
from guidedplace.errors import DegenerateCanvas, NonFiniteInput, ShapeMismatch
from guidedplace.frame import CoordFrame, denormalize, normalize
from guidedplace.graph import build_graph, update_dynamic
from guidedplace.netlist import Canvas
from guidedplace.objectives import per_net_hpwl

F100 = CoordFrame.from_canvas(Canvas(0, 0, 100, 100))


def test_corner_and_center():
    np.testing.assert_array_equal(normalize([[0, 0], [50, 50], [100, 100]], F100),
                                  [[-1, -1], [0, 0], [1, 1]])


def test_degenerate_canvas():
    with pytest.raises(DegenerateCanvas):
        CoordFrame.from_canvas(Canvas(0, 0, 0, 5))


@settings(max_examples=100, deadline=None)
@given(ox=st.floats(-1e4, 1e4), oy=st.floats(-1e4, 1e4), w=st.floats(1e-3, 1e5), h=st.floats(1e-3, 1e5),
       seed=st.integers(0, 2 ** 31))
def test_round_trip_identity(ox, oy, w, h, seed):
    f = CoordFrame.from_canvas(Canvas(ox, oy, w, h))
    p = np.random.default_rng(seed).uniform([ox, oy], [ox + w, oy + h], (7, 2))
    back = denormalize(normalize(p, f), f)
    np.testing.assert_allclose(back, p, rtol=1e-12, atol=1e-12 * max(abs(ox), abs(oy), w, h))


def test_lengths_scale_without_shift():
    f = CoordFrame.from_canvas(Canvas(10, 20, 50, 200))
    np.testing.assert_allclose(f.scale_lengths([5, 5]), [0.2, 0.05])
    np.testing.assert_allclose(f.unscale_lengths(f.scale_lengths([3, 7])), [3, 7])


def test_normalized_netlist_geometry():
    nl = make_netlist([(10, 20)], [[(0, 2, -4), 1]], pads=[(100, 50)])
    nn = nl.normalized
    assert (nn.macros[0].width, nn.macros[0].height) == (0.2, 0.4)
    assert (nn.pads[0].x, nn.pads[0].y) == (1.0, 0.0)
    assert (nn.nets[0].pins[0].offset_x, nn.nets[0].pins[0].offset_y) == (0.04, -0.08)
    assert (nn.canvas.origin_x, nn.canvas.width) == (-1.0, 2.0)


def test_same_point_net_feature_is_offset_spread():
    # canvas 100 -> scale 0.02; offsets differ by 5 per axis -> 0.1 + 0.1
    nl = make_netlist([(10, 10), (10, 10)], [[(0, 2, -1), (1, -3, 4)]])
    g = build_graph(nl, np.zeros((2, 2)))
    np.testing.assert_allclose(g.net_hpwl, [0.2], atol=1e-15)


def test_timestep_only_stored():
    nl, p = random_instance(5, 6, 1)
    x = nl.frame.normalize(p)
    a, b = build_graph(nl, x, 0), build_graph(nl, x, 1000)
    assert a.timestep == 0 and b.timestep == 1000
    for f in ("node_size", "node_pos", "net_hpwl", "net_degree", "edge_index", "edge_feat"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))


def test_isolated_macro():
    nl = make_netlist([(3, 3)], [])
    g = build_graph(nl, np.zeros((1, 2)))
    assert g.net_feat.shape == (0, 3) and g.macro_feat.shape == (1, 5)
    assert g.edge_index.shape == (0, 2)


def test_features_match_netlist():
    nl, p = random_instance(6, 9, 2, n_pads=3)
    x = nl.frame.normalize(p)
    g = build_graph(nl, x, 7)
    nn = nl.normalized
    assert g.macro_feat.shape == (9, 5)
    np.testing.assert_array_equal(g.net_hpwl, per_net_hpwl(nn, x))
    np.testing.assert_array_equal(g.node_is_pad, [0] * 6 + [1] * 3)
    np.testing.assert_array_equal(g.node_pos[:6], x)
    # degree pair = true bipartite degree (no cells, so both entries agree)
    deg = [len(n.pins) for n in nl.nets]
    np.testing.assert_array_equal(g.net_degree, np.stack([deg, deg], 1))
    assert np.all(g.edge_index[:, 0] < g.n_nets) and np.all(g.edge_index[:, 1] < g.n_nodes)
    node_deg = np.bincount(g.edge_index[:, 1], minlength=g.n_nodes)
    np.testing.assert_array_equal(node_deg, nl.macro_degrees())


def test_update_dynamic_matches_rebuild():
    nl, p = random_instance(6, 9, 3)
    x = nl.frame.normalize(p)
    g = build_graph(nl, x, 5)
    same = update_dynamic(g, nl, x, 5)
    for f in ("node_pos", "net_hpwl"):
        np.testing.assert_array_equal(getattr(same, f), getattr(g, f))
    y = x + np.random.default_rng(0).normal(0, 0.1, x.shape)
    up, full = update_dynamic(g, nl, y, 9), build_graph(nl, y, 9)
    for f in ("node_pos", "net_hpwl", "node_size", "net_degree", "edge_feat"):
        np.testing.assert_array_equal(getattr(up, f), getattr(full, f))
    assert up.timestep == 9
    # static arrays are shared, not rebuilt
    assert up.edge_index is g.edge_index and up.node_size is g.node_size


def test_graph_errors():
    nl, p = random_instance(4, 3, 4)
    g = build_graph(nl, p)
    bad = p.copy()
    bad[1, 0] = np.nan
    with pytest.raises(NonFiniteInput):
        update_dynamic(g, nl, bad, 1)
    with pytest.raises(ShapeMismatch):
        build_graph(nl, p[:3])


def test_graph_json_dump(tmp_path):
    nl, p = random_instance(3, 2, 5)
    build_graph(nl, p, 3).dump_json(tmp_path / "g.json")
    doc = json.loads((tmp_path / "g.json").read_text())
    assert doc["timestep"] == 3 and len(doc["macro_feat"]) == 5
