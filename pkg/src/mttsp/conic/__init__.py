"""Standard-form cone programs and their solvers."""

from .program import FREE, NONNEG, SOC, Cone, ConicProgram, ProgramBuilder, dump, merge_cones
from .solve import (
    DEFAULT_MAX_ITERS,
    DEFAULT_TOL,
    INFEASIBLE,
    ITERATION_LIMIT,
    OPTIMAL,
    TIME_LIMIT,
    UNBOUNDED,
    CertificateAudit,
    CertificateReport,
    SolveResult,
    certificate_audit,
    check_certificate,
    solve,
)

__all__ = [
    "FREE", "NONNEG", "SOC", "Cone", "ConicProgram", "ProgramBuilder", "dump", "merge_cones",
    "DEFAULT_MAX_ITERS", "DEFAULT_TOL", "OPTIMAL", "INFEASIBLE", "UNBOUNDED", "ITERATION_LIMIT",
    "TIME_LIMIT", "CertificateAudit", "CertificateReport", "SolveResult", "certificate_audit",
    "check_certificate", "solve",
]
