import importlib
import io

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from mttsp.conic import (
    FREE,
    INFEASIBLE,
    ITERATION_LIMIT,
    NONNEG,
    OPTIMAL,
    SOC,
    Cone,
    ConicProgram,
    ProgramBuilder,
    certificate_audit,
    check_certificate,
    dump,
    solve,
)
from mttsp.conic.presolve import eliminate_free

solve_module = importlib.import_module("mttsp.conic.solve")


def lower_bound_program(lo=3.0, hi=None):
    """min x s.t. x - lo in nonneg (and hi - x in nonneg)."""
    bld = ProgramBuilder()
    x = bld.var(FREE, "x")
    s = bld.var(NONNEG, "s")
    bld.row({x: 1.0, s: -1.0}, lo, "lo")
    if hi is not None:
        u = bld.var(NONNEG, "u")
        bld.row({x: 1.0, u: 1.0}, hi, "hi")
    bld.cost(x, 1.0)
    return bld.build()


def norm_program():
    """min t s.t. (t, a, b) in soc, a = 3, b = 4."""
    bld = ProgramBuilder()
    t, a, b = bld.add(SOC, ["t", "a", "b"])
    bld.row({a: 1.0}, 3.0, "a")
    bld.row({b: 1.0}, 4.0, "b")
    bld.cost(t, 1.0)
    return bld.build()


def simplex_program():
    bld = ProgramBuilder()
    x = bld.var(NONNEG, "x")
    y = bld.var(NONNEG, "y")
    bld.row({x: 1.0, y: 1.0}, 1.0, "sum")
    bld.cost(x, 1.0)
    bld.cost(y, 1.0)
    return bld.build()


@pytest.mark.parametrize("backend", ["ipm", "clarabel"])
@pytest.mark.parametrize("make, expected", [
    (lower_bound_program, 3.0), (norm_program, 5.0), (simplex_program, 1.0)])
def test_examples(make, expected, backend):
    res = solve(make(), backend=backend)
    assert res.status == OPTIMAL
    assert res.objective_value == pytest.approx(expected, abs=1e-7)


def test_certificate_of_norm_example():
    prog = norm_program()
    rep = check_certificate(prog, solve(prog))
    assert rep.applicable and rep.worst <= 1e-8


def test_certificate_sees_primal_perturbation():
    prog = norm_program()
    res = solve(prog)
    res.primal = res.primal + np.array([0.0, 1e-3, 0.0])
    rep = check_certificate(prog, res)
    assert rep.primal_abs == pytest.approx(1e-3, rel=1e-3)


def test_infeasible_certificate_not_applicable():
    prog = lower_bound_program(3.0, hi=1.0)
    res = solve(prog)
    assert res.status == INFEASIBLE
    assert not check_certificate(prog, res).applicable


def test_unbounded():
    bld = ProgramBuilder()
    x = bld.var(NONNEG, "x")
    y = bld.var(NONNEG, "y")
    bld.row({x: 1.0, y: -1.0}, 0.0, "eq")
    bld.cost(x, -1.0)
    assert solve(bld.build()).status == "unbounded"


def test_limits_are_statuses():
    res = solve(norm_program(), max_iters=1)
    assert res.status == ITERATION_LIMIT
    assert solve(norm_program(), time_budget=0.0).status in (OPTIMAL, "time_limit")


def test_unknown_backend():
    with pytest.raises(ValueError):
        solve(norm_program(), backend="nope")


def random_socp(seed, n_soc=3, dim=4, n_lp=4, m=5):
    """Feasible and bounded by construction: strictly interior x0 and a dual-interior s0."""
    rng = np.random.default_rng(seed)
    cones = [Cone(SOC, dim)] * n_soc + [Cone(NONNEG, n_lp)]
    n = n_soc * dim + n_lp
    x0, s0 = np.empty(n), np.empty(n)
    k = 0
    for _ in range(n_soc):
        for v in (x0, s0):
            tail = rng.normal(size=dim - 1)
            v[k:k + dim] = np.r_[np.linalg.norm(tail) + rng.uniform(0.5, 2), tail]
        k += dim
    x0[k:] = rng.uniform(0.5, 2, n_lp)
    s0[k:] = rng.uniform(0.5, 2, n_lp)
    A = sp.csr_matrix(rng.normal(size=(m, n)))
    y0 = rng.normal(size=m)
    return ConicProgram(c=A.T @ y0 + s0, A=A, b=A @ x0, cones=tuple(cones))


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_random_socp_matches_clarabel(seed):
    prog = random_socp(seed)
    ours = solve(prog)
    ref = solve(prog, backend="clarabel", tol=1e-10)
    assert ours.status == ref.status == OPTIMAL
    assert ours.objective_value == pytest.approx(ref.objective_value, rel=1e-6, abs=1e-6)
    assert check_certificate(prog, ours).worst <= 1e-7


def test_deterministic_iterates():
    prog = random_socp(3)
    a, b = [], []
    for trace in (a, b):
        red = eliminate_free(prog)
        solve_module.hsde_solve(red.A, red.b, red.c, red.cones, trace=trace)
    assert a == b


def test_free_columns_are_eliminated():
    prog = lower_bound_program()
    red = eliminate_free(prog)
    assert all(c.kind != FREE for c in red.cones)
    res = solve(prog)
    assert res.primal[0] == pytest.approx(3.0)


def test_audit_collects_optimal_solves():
    with certificate_audit() as audit:
        solve(norm_program())
        solve(lower_bound_program(3.0, hi=1.0))
    assert audit.solves == 2 and len(audit.reports) == 1
    assert audit.worst <= 1e-8


def test_program_validation():
    with pytest.raises(ValueError):
        ConicProgram(c=np.zeros(2), A=sp.csr_matrix((1, 3)), b=np.zeros(1),
                     cones=(Cone(NONNEG, 3),))
    with pytest.raises(ValueError):
        Cone(SOC, 1)


def test_dump_lists_names():
    buf = io.StringIO()
    dump(norm_program(), buf)
    text = buf.getvalue()
    assert text.startswith("conic-program vars 3 rows 2")
    assert "var 0 t soc0" in text
    assert "row 1 b = 4" in text
