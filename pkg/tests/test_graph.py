import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import stationary
from mttsp.graph import build, node_set
from mttsp.instance import generate


def test_single_target_edges():
    g = build(stationary([(1, 1)]))
    assert g.edges == ((0, 1), (1, 2))


def test_three_targets_edge_count():
    assert len(build(stationary([(1, 0), (2, 0), (3, 0)])).edges) == 12


@given(st.integers(1, 9))
def test_edge_set(n):
    g = build(generate(n, 0))
    edges = set(g.edges)
    assert len(g.edges) == n * n + n == len(edges)
    assert (g.source, g.sink) not in edges
    assert all(i != j for i, j in edges)
    expected = {(0, i) for i in g.targets} | {(i, g.sink) for i in g.targets}
    expected |= {(i, j) for i in g.targets for j in g.targets if i != j}
    assert edges == expected
    assert list(g.edges) == sorted(g.edges)


def test_adjacency():
    g = build(generate(3, 0))
    for v in g.nodes:
        assert all(g.edges[e][1] == v for e in g.e_in(v))
        assert all(g.edges[e][0] == v for e in g.e_out(v))
    assert g.e_in(g.source) == () and g.e_out(g.sink) == ()
    assert g.edges[g.edge_id(2, 3)] == (2, 3)
    assert [g.node_label(v) for v in g.nodes] == ["s", "1", "2", "3", "s'"]


def test_depot_sets():
    inst = stationary([(3, 4)])
    s = node_set(inst, 0)
    assert s.start == s.end
    np.testing.assert_allclose(s.start.as_array(), (0, 0, 0))
    sink = node_set(inst, 2)
    np.testing.assert_allclose(sink.start.as_array(), (0, 0, 0))
    np.testing.assert_allclose(sink.end.as_array(), (0, 0, 150))


def test_stationary_target_set():
    seg = node_set(stationary([(3, 4)], windows=[(10, 20)]), 1)
    np.testing.assert_allclose(seg.start.as_array(), (3, 4, 10))
    np.testing.assert_allclose(seg.end.as_array(), (3, 4, 20))


def test_segment_membership():
    inst = generate(3, 4)
    for v in range(1, 4):
        seg = node_set(inst, v)
        tg = inst.target(v)
        for t in np.linspace(seg.t_lo, seg.t_hi, 5):
            assert seg.contains(tg.position(t), t)
        assert not seg.contains(tg.position(seg.t_lo) + 1.0, seg.t_lo)
        np.testing.assert_allclose(seg.ref_pos, tg.ref_pos)


def test_node_out_of_range():
    with pytest.raises(KeyError):
        node_set(stationary([(1, 1)]), 5)
