"""Solver entry point, result type and independent certificate checks."""

from __future__ import annotations

import contextlib
import contextvars
import time
from dataclasses import dataclass, field

import numpy as np

from .ipm import hsde_solve
from .presolve import PresolveInfeasible, PresolveUnbounded, eliminate_free
from .program import FREE, NONNEG, SOC, ConicProgram

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"
TIME_LIMIT = "time_limit"

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITERS = 200


@dataclass
class SolveResult:
    status: str
    primal: np.ndarray | None
    dual: np.ndarray | None
    dual_slack: np.ndarray | None
    objective_value: float
    residuals: dict = field(default_factory=dict)
    iterations: int = 0
    solve_time: float = 0.0
    backend: str = "ipm"

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


@dataclass
class CertificateReport:
    """Residuals recomputed from the program data and a solve result.

    ``applicable`` is False unless the result claims optimality.  Relative
    measures divide by ``1 + ||b||_inf`` (primal), ``1 + ||c||_inf`` (dual) and
    ``1 + min(|c'x|, |b'y|)`` (gap); cone violations are relative to the same
    scales.
    """

    applicable: bool
    primal_abs: float = np.nan
    dual_abs: float = np.nan
    gap_abs: float = np.nan
    primal: float = np.nan
    dual: float = np.nan
    gap: float = np.nan
    primal_cone_violation: float = np.nan
    dual_cone_violation: float = np.nan
    complementarity: float = np.nan

    @property
    def worst(self) -> float:
        if not self.applicable:
            return np.nan
        return max(self.primal, self.dual, self.gap,
                   self.primal_cone_violation, self.dual_cone_violation)

    def ok(self, tol: float) -> bool:
        return self.applicable and self.worst <= tol


def _cone_violation(program: ConicProgram, v: np.ndarray, dual: bool) -> float:
    worst = 0.0
    for cone, sl in program.blocks():
        blk = v[sl]
        if cone.kind == FREE:
            # the dual cone of a free block is {0}
            if dual:
                worst = max(worst, float(np.abs(blk).max()))
        elif cone.kind == NONNEG:
            worst = max(worst, float(-blk.min()))
        elif cone.kind == SOC:
            worst = max(worst, float(np.linalg.norm(blk[1:]) - blk[0]))
    return worst


def check_certificate(program: ConicProgram, result: SolveResult) -> CertificateReport:
    """Recompute feasibility, cone membership and gap of ``result`` from scratch."""
    if result.status != OPTIMAL or result.primal is None or result.dual is None:
        return CertificateReport(applicable=False)
    x = np.asarray(result.primal, dtype=float)
    y = np.asarray(result.dual, dtype=float)
    A, b, c = program.A, program.b, program.c
    s = c - A.T @ y
    nb = 1.0 + (np.abs(b).max() if b.size else 0.0)
    nc = 1.0 + (np.abs(c).max() if c.size else 0.0)
    p_abs = float(np.abs(A @ x - b).max()) if b.size else 0.0
    pobj = float(c @ x)
    dobj = float(b @ y)
    g_abs = abs(pobj - dobj)
    # dual slack on free columns must vanish; that is the dual residual
    free = program.kind_mask(FREE)
    d_abs = float(np.abs(s[free]).max()) if free.any() else 0.0
    return CertificateReport(
        applicable=True,
        primal_abs=p_abs,
        dual_abs=d_abs,
        gap_abs=g_abs,
        primal=p_abs / nb,
        dual=d_abs / nc,
        gap=g_abs / (1.0 + min(abs(pobj), abs(dobj))),
        primal_cone_violation=_cone_violation(program, x, dual=False) / nb,
        dual_cone_violation=_cone_violation(program, np.where(free, 0.0, s), dual=True) / nc,
        complementarity=float(abs(x @ s)),
    )


_AUDIT: contextvars.ContextVar = contextvars.ContextVar("mttsp_conic_audit", default=None)


class CertificateAudit:
    """Collects a certificate report for every optimal solve made inside the context."""

    def __init__(self):
        self.reports: list[CertificateReport] = []
        self.solves = 0

    def record(self, program, result):
        self.solves += 1
        if result.status == OPTIMAL:
            self.reports.append(check_certificate(program, result))

    @property
    def worst(self) -> float:
        return max((r.worst for r in self.reports), default=0.0)


@contextlib.contextmanager
def certificate_audit():
    audit = CertificateAudit()
    token = _AUDIT.set(audit)
    try:
        yield audit
    finally:
        _AUDIT.reset(token)


def solve(program: ConicProgram, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS,
          time_budget: float | None = None, backend: str = "ipm") -> SolveResult:
    """Solve ``program``; limits are reported through ``status``, never raised.

    ``backend`` is ``"ipm"`` (the bundled interior-point method) or
    ``"clarabel"``.
    """
    start = time.perf_counter()
    if backend == "ipm":
        result = _solve_ipm(program, tol, max_iters, time_budget)
    elif backend == "clarabel":
        from .clarabel_backend import solve_clarabel
        result = solve_clarabel(program, tol, max_iters, time_budget)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    result.solve_time = time.perf_counter() - start
    audit = _AUDIT.get()
    if audit is not None:
        audit.record(program, result)
    return result


def _solve_ipm(program, tol, max_iters, time_budget) -> SolveResult:
    try:
        red = eliminate_free(program)
    except PresolveInfeasible:
        return SolveResult(INFEASIBLE, None, None, None, np.inf, backend="ipm")
    except PresolveUnbounded:
        return SolveResult(UNBOUNDED, None, None, None, -np.inf, backend="ipm")
    if red.A.shape[1] == 0:
        x, y, s = red.postsolve(np.zeros(0), np.zeros(red.rows.size), np.zeros(0))
        return _finish(program, OPTIMAL, x, y, s, 0, "ipm")
    out = hsde_solve(red.A, red.b, red.c, red.cones, tol=tol, max_iters=max_iters,
                     time_budget=time_budget)
    if out.status == INFEASIBLE:
        return SolveResult(INFEASIBLE, None, None, None, np.inf, out.info, out.iterations)
    if out.status == UNBOUNDED:
        return SolveResult(UNBOUNDED, None, None, None, -np.inf, out.info, out.iterations)
    x, y, s = red.postsolve(out.x, out.y, out.s)
    return _finish(program, out.status, x, y, s, out.iterations, "ipm")


def _finish(program, status, x, y, s, iterations, backend) -> SolveResult:
    nb = 1.0 + (np.abs(program.b).max() if program.b.size else 0.0)
    nc = 1.0 + (np.abs(program.c).max() if program.c.size else 0.0)
    s_full = program.c - program.A.T @ y
    pobj = float(program.c @ x)
    dobj = float(program.b @ y)
    residuals = dict(
        primal=float(np.abs(program.A @ x - program.b).max(initial=0.0)) / nb,
        dual=float(np.abs(s_full - s).max(initial=0.0)) / nc,
        gap=abs(pobj - dobj) / (1.0 + min(abs(pobj), abs(dobj))),
    )
    return SolveResult(status, x, y, s, pobj + program.offset, residuals, iterations,
                       backend=backend)


