"""Clarabel behind the :func:`mttsp.conic.solve` contract."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .program import FREE, NONNEG, SOC, ConicProgram

_STATUS = {
    "Solved": "optimal",
    "AlmostSolved": "optimal",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostDualInfeasible": "unbounded",
    "MaxIterations": "iteration_limit",
    "MaxTime": "time_limit",
}


def solve_clarabel(program: ConicProgram, tol, max_iters, time_budget):
    import clarabel

    from .solve import SolveResult, _finish

    n, m = program.n, program.m
    # Ax = b as a zero cone, then -x_K + s = 0 with s in K for every conic block
    blocks = []
    cones = [clarabel.ZeroConeT(m)] if m else []
    conic_cols = []
    for cone, sl in program.blocks():
        if cone.kind == FREE:
            continue
        conic_cols.extend(range(sl.start, sl.stop))
        if cone.kind == NONNEG:
            cones.append(clarabel.NonnegativeConeT(cone.dim))
        elif cone.kind == SOC:
            cones.append(clarabel.SecondOrderConeT(cone.dim))
    k = len(conic_cols)
    sel = sp.csr_matrix((-np.ones(k), (np.arange(k), conic_cols)), shape=(k, n))
    blocks = [program.A, sel] if m else [sel]
    Acl = sp.vstack(blocks).tocsc()
    bcl = np.concatenate([program.b, np.zeros(k)])
    P = sp.csc_matrix((n, n))

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_feas = tol
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.max_iter = max_iters
    settings.presolve_enable = False
    if time_budget is not None:
        settings.time_limit = float(time_budget)
    solver = clarabel.DefaultSolver(P, program.c, Acl, bcl, cones, settings)
    sol = solver.solve()
    status = _STATUS.get(str(sol.status).split(".")[-1], "iteration_limit")
    if status in ("infeasible", "unbounded"):
        value = np.inf if status == "infeasible" else -np.inf
        return SolveResult(status, None, None, None, value, iterations=sol.iterations,
                           backend="clarabel")
    x = np.asarray(sol.x, dtype=float)
    z = np.asarray(sol.z, dtype=float)
    y = -z[:m]
    s = np.zeros(n)
    s[conic_cols] = z[m:]
    return _finish(program, status, x, y, s, sol.iterations, "clarabel")
