"""Reference primal-dual interior-point method for standard-form cone programs.

Homogeneous self-dual embedding with Nesterov-Todd scaling and a Mehrotra
predictor-corrector, solving ``min c'x s.t. Ax = b, x in K`` after free
columns have been eliminated.  Each iteration factors the Newton
system once and reuses it for the predictor, the corrector and the
homogenising column.  Newton systems are solved in augmented form rather than
through the normal matrix ``A W^2 A'``, which loses accuracy near the
boundary of the second-order cones.
"""

from __future__ import annotations

import time

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cones import ConeProduct

_DENSE_LIMIT = 150
_STEP_FRACTION = 0.99


def _segment_max(values, starts, size):
    out = np.zeros(size)
    nonempty = starts[:-1] < starts[1:]
    if values.size:
        out[nonempty] = np.maximum.reduceat(values, starts[:-1][nonempty])
    return out


def _ruiz(A: sp.csr_matrix, K: ConeProduct, iters: int = 8):
    """Row and cone-block column equilibration factors ``(D, E)``."""
    m, n = A.shape
    D = np.ones(m)
    E = np.ones(n)
    if m == 0 or n == 0:
        return D, E
    # work on the coordinate data with a fixed pattern: CSC order for column
    # maxima and a row-sorted permutation for row maxima
    B = A.tocsc()
    vals = np.abs(B.data)
    cols = np.repeat(np.arange(n), np.diff(B.indptr))
    rows = B.indices
    by_row = np.argsort(rows, kind="stable")
    row_starts = np.searchsorted(rows[by_row], np.arange(m + 1))
    groups = [(idx.ravel(), idx.shape) for idx in K.soc.values()]
    for _ in range(iters):
        col = np.sqrt(np.maximum(_segment_max(vals, B.indptr, n), 1e-8))
        for flat, shape in groups:
            blk = col[flat].reshape(shape).max(axis=1)
            col[flat] = np.repeat(blk, shape[1])
        vals = vals / col[cols]
        row = np.sqrt(np.maximum(_segment_max(vals[by_row], row_starts, m), 1e-8))
        vals = vals / row[rows]
        D /= row
        E /= col
    return D, E


class _Augmented:
    """Quasi-definite Newton system ``[[-W^-2, A'], [A, 0]]`` with a fixed pattern.

    The sparsity pattern is assembled once per solve; each iteration only
    refreshes the scaling block.  Factorization uses a small static
    regularisation ``delta`` and solves are refined against the exact operator,
    which keeps accuracy as ``W`` degenerates near the cone boundaries.
    """

    def __init__(self, A: sp.csr_matrix, K: ConeProduct, delta: float = 1e-10, refine: int = 3):
        m, n = A.shape
        self.n, self.m = n, m
        self.delta = delta
        self.refine = refine
        t_rows, t_cols = K.theta_pattern
        coo = A.tocoo()
        self.n_theta = t_rows.size
        rows = np.concatenate([t_rows, coo.row + n, coo.col, n + np.arange(m)])
        cols = np.concatenate([t_cols, coo.col, coo.row + n, n + np.arange(m)])
        self.fixed = np.concatenate([coo.data, coo.data, np.zeros(m)])
        self.diag = np.flatnonzero(t_rows == t_cols)
        order = np.arange(rows.size, dtype=float) + 1.0
        mat = sp.csc_matrix((order, (rows, cols)), shape=(n + m, n + m))
        mat.sort_indices()
        self.perm = mat.data.astype(np.int64) - 1
        self.mat = mat
        self.dense = n + m <= _DENSE_LIMIT
        if self.dense:
            self.rows, self.cols = rows, cols

    def factor(self, theta_inv: np.ndarray) -> None:
        vals = np.concatenate([-theta_inv, self.fixed])
        self.exact = self.mat.copy()
        self.exact.data = vals[self.perm]
        reg = vals.copy()
        reg[self.diag] -= self.delta
        reg[vals.size - self.m:] += self.delta
        if self.dense:
            dense = np.zeros((self.n + self.m, self.n + self.m))
            dense[self.rows, self.cols] = reg
            self._lu = sla.lu_factor(dense, check_finite=False)
            self._splu = None
        else:
            Kr = self.mat.copy()
            Kr.data = reg[self.perm]
            self._lu = None
            self._splu = spla.splu(Kr, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.1)

    def _raw(self, r):
        if self._lu is not None:
            return sla.lu_solve(self._lu, r, check_finite=False)
        return self._splu.solve(r)

    def solve(self, top, bottom):
        r = np.concatenate([top, bottom])
        z = self._raw(r)
        stop = 1e-14 * (1.0 + np.abs(r).max(initial=0.0))
        for _ in range(self.refine):
            res = r - self.exact @ z
            worst = np.abs(res).max(initial=0.0)
            if not np.isfinite(worst) or worst <= stop:
                break
            z = z + self._raw(res)
        return z[: self.n], z[self.n:]


class IPMOutcome:
    def __init__(self, status, x, y, s, iterations, info):
        self.status = status
        self.x = x
        self.y = y
        self.s = s
        self.iterations = iterations
        self.info = info


def hsde_solve(A, b, c, cones, tol: float = 1e-8, max_iters: int = 200,
               time_budget: float | None = None, deadline: float | None = None,
               trace: list | None = None) -> IPMOutcome:
    """Solve ``min c'x s.t. Ax = b, x in K`` for a pure conic product ``K``.

    Returns primal ``x``, dual ``y`` and dual slack ``s = c - A'y`` for the
    unscaled problem.  ``status`` is one of ``optimal``, ``infeasible``
    (primal infeasible; ``y`` is a Farkas ray), ``unbounded`` (``x`` is a
    ray), ``iteration_limit`` or ``time_limit``.
    """
    start = time.perf_counter()
    if time_budget is not None:
        deadline = min(deadline or np.inf, start + time_budget)
    K = ConeProduct(cones)
    A = sp.csr_matrix(A)
    m, n = A.shape
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    D, E = _ruiz(A, K)
    As = (sp.diags(D) @ A @ sp.diags(E)).tocsr()
    Ast = As.T.tocsr()
    bs = D * b
    cs = E * c
    # objective scaling keeps the embedding balanced
    bscale = max(1.0, np.abs(bs).max(initial=0.0))
    cscale = max(1.0, np.abs(cs).max(initial=0.0))
    bs = bs / bscale
    cs = cs / cscale

    def unscale(x, y, s, tau):
        xo = E * x * (bscale / tau)
        yo = D * y * (cscale / tau)
        so = s / E * (cscale / tau)
        return xo, yo, so

    fac = _Augmented(As, K)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        status, it, info, best = _iterate(
            A, b, c, As, Ast, bs, cs, K, fac, tol, max_iters, deadline, trace, unscale, D, E)
    info["iterations"] = it
    xo, yo, so = best[:3] if best is not None else (None, None, None)
    return IPMOutcome(status, xo, yo, so, it, info)


def _iterate(A, b, c, As, Ast, bs, cs, K, fac, tol, max_iters, deadline, trace, unscale, D, E):
    m = A.shape[0]
    norm_b = np.abs(b).max(initial=0.0)
    norm_c = np.abs(c).max(initial=0.0)
    e = K.unit()
    x = e.copy()
    s = e.copy()
    y = np.zeros(m)
    tau = kappa = 1.0
    nu = K.degree
    info = {}
    best = None
    status = "iteration_limit"
    it = 0
    for it in range(max_iters + 1):
        rp = As @ x - bs * tau
        rd = Ast @ y + s - cs * tau
        rg = bs @ y - cs @ x - kappa
        mu = (x @ s + tau * kappa) / (nu + 1)

        if not (np.isfinite(x).all() and np.isfinite(s).all() and np.isfinite(y).all()
                and np.isfinite(tau) and np.isfinite(kappa)):
            info["failure"] = "non-finite iterate"
            break
        xo, yo, so = unscale(x, y, s, tau)
        pres = np.abs(A @ xo - b).max(initial=0.0) / (1.0 + norm_b)
        dres = np.abs(A.T @ yo + so - c).max(initial=0.0) / (1.0 + norm_c)
        pobj = c @ xo
        dobj = b @ yo
        gap = abs(pobj - dobj) / (1.0 + min(abs(pobj), abs(dobj)))
        info = dict(primal=pres, dual=dres, gap=gap, pobj=pobj, dobj=dobj, mu=mu,
                    tau=tau, kappa=kappa)
        if trace is not None:
            trace.append(dict(info, margin_x=K.margin(x), margin_s=K.margin(s)))
        if pres <= tol and dres <= tol and gap <= tol:
            status = "optimal"
            best = (xo, yo, so)
            break
        score = max(pres, dres, gap)
        if best is None or score < best[3]:
            best = (xo, yo, so, score)

        # infeasibility certificates on the unscaled rays
        yr = D * y
        by = b @ yr
        if by > 0:
            sr = s / E
            if np.abs(A.T @ yr + sr).max(initial=0.0) <= tol * by and tau < kappa * 1e3:
                status = "infeasible"
                best = (None, yr / by, sr / by)
                break
        xr = E * x
        cx = c @ xr
        if cx < 0 and np.abs(A @ xr).max(initial=0.0) <= tol * -cx and tau < kappa * 1e3:
            status = "unbounded"
            best = (xr / -cx, None, None)
            break
        if it == max_iters:
            break
        if deadline is not None and time.perf_counter() > deadline:
            status = "time_limit"
            break

        W = K.nt_scaling(x, s)
        lam = W.lam
        try:
            fac.factor(W.theta_data(inverse=True))
        except Exception:  # pragma: no cover - singular beyond regularisation
            status = "iteration_limit"
            info["failure"] = "factorization"
            break
        dx1, v = fac.solve(cs, bs)
        denom = bs @ v - cs @ dx1 + kappa / tau

        def direction(eta, xi, xi_tau):
            q = K.jordan_div(lam, xi)
            r1 = eta * rd + W.apply_inv(q)
            dx0, u = fac.solve(-r1, -eta * rp)
            dtau = (-eta * rg + cs @ dx0 - bs @ u + xi_tau / tau) / denom
            dx = dx0 + dtau * dx1
            dy = u + dtau * v
            ds = W.apply_inv(q) - W.apply_inv(W.apply_inv(dx))
            dkappa = (xi_tau - kappa * dtau) / tau
            return dx, dy, ds, dtau, dkappa

        def step(dx, ds, dtau, dkappa):
            a = min(K.max_step(x, dx), K.max_step(s, ds))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        # predictor
        lam_sq = K.jordan(lam, lam)
        dxa, dya, dsa, dta, dka = direction(1.0, -lam_sq, -tau * kappa)
        alpha_a = min(1.0, step(dxa, dsa, dta, dka))
        sigma = min(1.0, max(0.0, (1.0 - alpha_a))) ** 3
        # corrector
        corr = K.jordan(W.apply_inv(dxa), W.apply(dsa))
        xi = -lam_sq - corr + sigma * mu * e
        xi_tau = -tau * kappa - dta * dka + sigma * mu
        dx, dy, ds, dt, dk = direction(1.0 - sigma, xi, xi_tau)
        alpha = min(1.0, _STEP_FRACTION * step(dx, ds, dt, dk))
        if not np.isfinite(alpha) or alpha <= 1e-12:
            info["failure"] = "step"
            break
        x = x + alpha * dx
        y = y + alpha * dy
        s = s + alpha * ds
        tau = tau + alpha * dt
        kappa = kappa + alpha * dk
    return status, it, info, best
