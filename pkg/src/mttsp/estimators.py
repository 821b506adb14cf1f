"""scikit-learn style wrappers around the solvers.

``X`` is an :class:`~mttsp.instance.Instance`, a path to an instance file,
instance text, or (for the transformer) a list of those.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from . import bench, bnb
from .graph import build
from .instance import Instance, InstanceError, parse


def check_instance(X) -> Instance:
    """Coerce ``X`` to a validated :class:`Instance`."""
    if isinstance(X, Instance):
        return X.validate()
    if isinstance(X, Path) or (isinstance(X, str) and "\n" not in X and Path(X).exists()):
        return parse(Path(X).read_text())
    if isinstance(X, str):
        return parse(X)
    raise InstanceError(f"expected an Instance, a path or instance text, got {type(X).__name__}")


def check_instances(X) -> list[Instance]:
    if isinstance(X, (Instance, str, Path)):
        return [check_instance(X)]
    return [check_instance(x) for x in X]


def _check_formulation(name):
    if name not in bench.BUILDERS:
        raise ValueError(f"formulation must be one of {sorted(bench.BUILDERS)}, got {name!r}")


class MTTSPSolver(BaseEstimator):
    """Exact solver for one instance.

    After ``fit``: ``tour_``, ``result_``, ``cost_``, ``lower_bound_`` and
    ``gap_percent_``.  ``predict`` returns the visit order of the targets.
    """

    def __init__(self, formulation="gcs", time_limit=120.0, rel_tol=bnb.DEFAULT_REL_TOL,
                 abs_tol=bnb.DEFAULT_ABS_TOL, threads=1):
        self.formulation = formulation
        self.time_limit = time_limit
        self.rel_tol = rel_tol
        self.abs_tol = abs_tol
        self.threads = threads

    def fit(self, X, y=None):
        _check_formulation(self.formulation)
        inst = check_instance(X)
        mbp = bench.BUILDERS[self.formulation](inst, build(inst))
        res = bnb.solve_mip(mbp, time_limit=self.time_limit, abs_tol=self.abs_tol,
                            rel_tol=self.rel_tol, threads=self.threads)
        self.instance_ = inst
        self.result_ = res
        self.tour_ = res.incumbent
        self.cost_ = res.z_P
        self.lower_bound_ = res.z_D
        self.gap_percent_ = res.gap_percent
        return self

    def predict(self, X=None):
        if not hasattr(self, "result_"):
            raise NotFittedError("call fit before predict")
        if X is not None and check_instance(X) != self.instance_:
            self.fit(X)
        if self.tour_ is None:
            return None
        return np.array(self.tour_.targets, dtype=int)


class RelaxationBound(BaseEstimator, TransformerMixin):
    """Maps instances to the optimum of a formulation's continuous relaxation."""

    def __init__(self, formulation="gcs", tol=1e-8):
        self.formulation = formulation
        self.tol = tol

    def fit(self, X=None, y=None):
        _check_formulation(self.formulation)
        return self

    def transform(self, X):
        _check_formulation(self.formulation)
        out = []
        for inst in check_instances(X):
            value, _, _ = bench.relaxed_bound(inst, self.formulation, tol=self.tol)
            out.append(np.nan if value is None else value)
        return np.array(out)
