import io
import math

import numpy as np
import pytest

from conftest import stationary
from mttsp.bnb import (
    LOG_HEADER,
    BnbNode,
    branch_select,
    flow_sequence,
    gap_percent,
    incumbent_heuristic,
    propagate,
    read_log,
    solve_instance,
    solve_mip,
)
from mttsp.formulations import VariableLayout, build_gcs, recover_tour
from mttsp.graph import build
from mttsp.instance import assign_windows, generate
from mttsp.oracle import brute_force, check_feasible


def layout_for(y):
    return VariableLayout("gcs", edge_cols={e: {"y": e} for e in range(len(y))})


@pytest.mark.parametrize("y, expected", [([0.5, 0.9], 0), ([0.3, 0.49], 1), ([0.5, 0.5], 0)])
def test_branch_select(y, expected):
    assert branch_select(np.array(y), layout_for(y)) == expected


def test_branch_select_needs_fraction():
    with pytest.raises(ValueError):
        branch_select(np.array([0.0, 1.0]), layout_for([0, 1]))


@pytest.mark.parametrize("zp, zd, expected", [(100, 90, 10.0), (50, 50, 0.0), (None, 3, math.inf)])
def test_gap_percent(zp, zd, expected):
    assert gap_percent(zp, zd) == expected


def test_node_sets_disjoint():
    with pytest.raises(ValueError):
        BnbNode(frozenset({1}), frozenset({1}), 0.0)


def test_single_target(single_target):
    res = solve_instance(single_target)
    assert res.status == "optimal"
    assert res.z_P == pytest.approx(20.0, abs=1e-6)
    assert res.gap_percent == pytest.approx(0.0, abs=1e-6)
    assert res.incumbent.sequence == (0, 1, 2)


def test_flow_follows_argmax():
    g = build(stationary([(1, 0), (2, 0)]))
    y = np.zeros(len(g.edges))
    y[g.edge_id(0, 1)] = 0.7
    y[g.edge_id(0, 2)] = 0.3
    assert flow_sequence(g, y)[0] == 1
    y[g.edge_id(0, 1)], y[g.edge_id(0, 2)] = 0.3, 0.7
    assert flow_sequence(g, y) == (2, 1)


def test_heuristic_on_integral_solution():
    inst = assign_windows(generate(4, 31), [50], seed=31)[0]
    g = build(inst)
    mbp = build_gcs(inst, g)
    res = solve_mip(mbp)
    tour = incumbent_heuristic(inst, res.primal, mbp.layout, g)
    expected = recover_tour(inst, g, mbp.layout, res.primal)
    assert tour.sequence == expected.sequence
    assert tour.cost == pytest.approx(expected.cost, rel=1e-7)


def test_heuristic_gives_up_on_bad_order():
    # target 2 closes early on the far side, so visiting 1 first is hopeless
    inst = stationary([(40, 0), (-40, 0)], windows=[(0, 150), (0, 12)])
    g = build(inst)
    mbp = build_gcs(inst, g)
    x = np.zeros(mbp.base.n)
    for i, j in ((0, 1), (1, 2), (2, 3)):
        x[mbp.layout.edge_cols[g.edge_id(i, j)]["y"]] = 1.0
    assert incumbent_heuristic(inst, x, mbp.layout, g) is None


def test_propagate_degree_and_chains():
    g = build(stationary([(1, 0), (2, 0), (3, 0)]))
    zero, one = propagate(g, set(), {g.edge_id(0, 1)})
    assert g.edge_id(0, 2) in zero and g.edge_id(2, 1) in zero
    # s->1->2 fixed: 2->1 would close a cycle, 2->s' would skip target 3
    zero, one = propagate(g, set(), {g.edge_id(0, 1), g.edge_id(1, 2)})
    assert g.edge_id(2, 4) in zero
    assert {g.edge_id(2, 3), g.edge_id(3, 4)} <= one
    assert propagate(g, set(), {g.edge_id(0, 1), g.edge_id(0, 2)}) is None


def test_infeasible_root():
    res = solve_instance(stationary([(40, 0)], windows=[(0, 1)]))
    assert res.status == "infeasible"
    assert res.incumbent is None


@pytest.fixture(scope="module")
def five():
    return assign_windows(generate(5, 41), [50], seed=41)[0]


@pytest.fixture(scope="module")
def five_result(five):
    log = io.StringIO()
    res = solve_instance(five, log=log)
    return res, log.getvalue()


def test_matches_oracle(five, five_result):
    res, _ = five_result
    assert res.status == "optimal"
    assert res.z_P == pytest.approx(brute_force(five).cost, rel=1e-6)
    assert res.z_D <= res.z_P + 1e-9
    assert res.gap_percent <= 1e-4
    assert check_feasible(five, res.incumbent) == []


def test_log_is_monotone(five_result):
    res, text = five_result
    assert text.splitlines()[0] == LOG_HEADER
    rows = read_log(text)
    assert rows and rows[-1]["nodes"] == res.nodes_explored
    zp = [r["z_P"] for r in rows]
    zd = [r["z_D"] for r in rows]
    assert all(b <= a + 1e-9 for a, b in zip(zp, zp[1:]))
    assert all(b >= a - 1e-9 for a, b in zip(zd, zd[1:]))
    assert all(r["elapsed"] >= 0 for r in rows)


def test_deterministic_and_parallel(five, five_result):
    res, _ = five_result
    again = solve_instance(five)
    assert (again.nodes_explored, again.z_P, again.z_D) == (res.nodes_explored, res.z_P, res.z_D)
    par = solve_instance(five, threads=3)
    assert par.z_P == pytest.approx(res.z_P, rel=1e-9)
    assert par.z_D == pytest.approx(res.z_D, rel=1e-9)


def test_time_limit_keeps_best_found(five):
    res = solve_instance(five, formulation="bigm", time_limit=0.5)
    assert res.status in ("feasible", "no_incumbent", "optimal")
    if res.incumbent is not None:
        assert check_feasible(five, res.incumbent) == []
        assert res.z_D <= res.z_P + 1e-9
