"""Vectorised operations on products of nonnegative orthants and second-order cones."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .program import NONNEG, SOC, Cone


class ConeProduct:
    """Index bookkeeping for a product cone over consecutive coordinates.

    Second-order cones are grouped by dimension so every operation is a few
    array expressions per distinct dimension.
    """

    def __init__(self, cones: tuple[Cone, ...]):
        lp, groups = [], {}
        start = 0
        for cone in cones:
            if cone.kind == NONNEG:
                lp.extend(range(start, start + cone.dim))
            elif cone.kind == SOC:
                groups.setdefault(cone.dim, []).append(range(start, start + cone.dim))
            else:
                raise ValueError("free columns must be eliminated before the cone solver")
            start += cone.dim
        self.dim = start
        self.lp = np.array(lp, dtype=int)
        self.soc = {d: np.array([list(r) for r in rs], dtype=int) for d, rs in groups.items()}
        self.degree = self.lp.size + sum(idx.shape[0] for idx in self.soc.values())
        self._theta_pattern()

    def _theta_pattern(self):
        rows = [self.lp]
        cols = [self.lp]
        for d, idx in self.soc.items():
            rows.append(np.repeat(idx, d, axis=1).ravel())
            cols.append(np.tile(idx, (1, d)).ravel())
        self._t_rows = np.concatenate(rows) if rows else np.zeros(0, int)
        self._t_cols = np.concatenate(cols) if cols else np.zeros(0, int)

    @property
    def theta_pattern(self) -> tuple[np.ndarray, np.ndarray]:
        return self._t_rows, self._t_cols

    def unit(self) -> np.ndarray:
        e = np.zeros(self.dim)
        e[self.lp] = 1.0
        for idx in self.soc.values():
            e[idx[:, 0]] = 1.0
        return e

    def margin(self, x) -> float:
        """Smallest cone margin: ``x_i`` for orthant entries, ``t - ||u||`` per SOC block."""
        vals = [np.inf]
        if self.lp.size:
            vals.append(x[self.lp].min())
        for idx in self.soc.values():
            blk = x[idx]
            vals.append((blk[:, 0] - np.linalg.norm(blk[:, 1:], axis=1)).min())
        return float(min(vals))

    def jordan(self, u, v) -> np.ndarray:
        out = np.empty(self.dim)
        out[self.lp] = u[self.lp] * v[self.lp]
        for idx in self.soc.values():
            U, V = u[idx], v[idx]
            blk = np.empty_like(U)
            blk[:, 0] = np.einsum("ij,ij->i", U, V)
            blk[:, 1:] = U[:, :1] * V[:, 1:] + V[:, :1] * U[:, 1:]
            out[idx] = blk
        return out

    def jordan_div(self, lam, xi) -> np.ndarray:
        """Solve ``lam o q = xi`` for ``q``."""
        out = np.empty(self.dim)
        out[self.lp] = xi[self.lp] / lam[self.lp]
        for idx in self.soc.values():
            L, X = lam[idx], xi[idx]
            l0 = L[:, 0]
            l1 = L[:, 1:]
            det = _jdet(L)
            l1x = np.einsum("ij,ij->i", l1, X[:, 1:])
            q0 = (l0 * X[:, 0] - l1x) / det
            blk = np.empty_like(L)
            blk[:, 0] = q0
            blk[:, 1:] = (X[:, 1:] - q0[:, None] * l1) / l0[:, None]
            out[idx] = blk
        return out

    def max_step(self, x, dx) -> float:
        """Largest ``a`` with ``x + a dx`` in the cone (``x`` interior); ``inf`` if unbounded."""
        alpha = np.inf
        if self.lp.size:
            d = dx[self.lp]
            neg = d < 0
            if neg.any():
                alpha = min(alpha, float(np.min(-x[self.lp][neg] / d[neg])))
        for idx in self.soc.values():
            X, D = x[idx], dx[idx]
            a = D[:, 0] ** 2 - np.einsum("ij,ij->i", D[:, 1:], D[:, 1:])
            b = X[:, 0] * D[:, 0] - np.einsum("ij,ij->i", X[:, 1:], D[:, 1:])
            c = X[:, 0] ** 2 - np.einsum("ij,ij->i", X[:, 1:], X[:, 1:])
            alpha = min(alpha, _soc_first_root(a, b, c))
        return alpha

    def nt_scaling(self, x, s) -> NTScaling:
        return NTScaling(self, x, s)


def _jdet(X) -> np.ndarray:
    # x0^2 - |x1|^2 factored to avoid cancellation near the boundary
    r = np.linalg.norm(X[:, 1:], axis=1)
    return np.maximum((X[:, 0] - r) * (X[:, 0] + r), 1e-300)


def _soc_first_root(a, b, c) -> float:
    # smallest positive root of a t^2 + 2 b t + c with c > 0
    best = np.inf
    c = np.maximum(c, 0.0)
    lin = np.abs(a) <= 1e-14 * (np.abs(b) + np.abs(c) + 1e-300)
    if lin.any():
        bl, cl = b[lin], c[lin]
        mask = bl < 0
        if mask.any():
            best = min(best, float(np.min(-cl[mask] / (2.0 * bl[mask]))))
    q = ~lin
    if q.any():
        aq, bq, cq = a[q], b[q], c[q]
        disc = bq * bq - aq * cq
        ok = disc >= 0
        if ok.any():
            aq, bq, cq, sq = aq[ok], bq[ok], cq[ok], np.sqrt(disc[ok])
            qq = -(bq + np.where(bq >= 0, sq, -sq))
            with np.errstate(divide="ignore", invalid="ignore"):
                r1 = np.where(aq != 0, qq / aq, np.inf)
                r2 = np.where(qq != 0, cq / qq, np.inf)
            roots = np.concatenate([r1, r2])
            roots = roots[roots > 0]
            if roots.size:
                best = min(best, float(roots.min()))
    return best


class NTScaling:
    """Nesterov-Todd scaling ``W`` with ``W s = W^{-1} x = lam`` (``x`` primal, ``s`` dual)."""

    def __init__(self, K: ConeProduct, x, s):
        self.K = K
        lp = K.lp
        self.lp_w = np.sqrt(x[lp] / s[lp])
        self.soc = {}
        for d, idx in K.soc.items():
            X, S = x[idx], s[idx]
            xn = np.sqrt(_jdet(X))
            sn = np.sqrt(_jdet(S))
            xb = X / xn[:, None]
            sb = S / sn[:, None]
            gamma = np.sqrt(np.maximum((1.0 + np.einsum("ij,ij->i", xb, sb)) / 2.0, 1e-300))
            w = np.empty_like(X)
            w[:, 0] = (xb[:, 0] + sb[:, 0]) / (2.0 * gamma)
            w[:, 1:] = (xb[:, 1:] - sb[:, 1:]) / (2.0 * gamma[:, None])
            beta = np.sqrt(xn / sn)
            self.soc[d] = (w, beta)
        self.lam = self.apply(s)

    def _hyp(self, w, v, inverse):
        # H(w) v with H(w) = [[w0, w1'], [w1, I + w1 w1'/(1 + w0)]]; inverse flips w1
        w0 = w[:, 0]
        w1 = -w[:, 1:] if inverse else w[:, 1:]
        v0 = v[:, 0]
        v1 = v[:, 1:]
        dot = np.einsum("ij,ij->i", w1, v1)
        out = np.empty_like(v)
        out[:, 0] = w0 * v0 + dot
        out[:, 1:] = v1 + (v0 + dot / (1.0 + w0))[:, None] * w1
        return out

    def apply(self, v) -> np.ndarray:
        out = np.empty_like(v)
        out[self.K.lp] = self.lp_w * v[self.K.lp]
        for d, idx in self.K.soc.items():
            w, beta = self.soc[d]
            out[idx] = beta[:, None] * self._hyp(w, v[idx], inverse=False)
        return out

    def apply_inv(self, v) -> np.ndarray:
        out = np.empty_like(v)
        out[self.K.lp] = v[self.K.lp] / self.lp_w
        for d, idx in self.K.soc.items():
            w, beta = self.soc[d]
            out[idx] = self._hyp(w, v[idx], inverse=True) / beta[:, None]
        return out

    def apply_sq(self, v) -> np.ndarray:
        return self.apply(self.apply(v))

    def theta_data(self, inverse: bool = False) -> np.ndarray:
        """Entries of ``W^2`` (or ``W^-2``) in the order of ``ConeProduct.theta_pattern``."""
        parts = [self.lp_w ** (-2 if inverse else 2)]
        for d, idx in self.K.soc.items():
            w, beta = self.soc[d]
            J = np.diag(np.r_[1.0, -np.ones(d - 1)])
            if inverse:
                w = w * np.r_[1.0, -np.ones(d - 1)]
            blocks = 2.0 * np.einsum("ki,kj->kij", w, w) - J[None, :, :]
            blocks *= (beta ** (-2 if inverse else 2))[:, None, None]
            parts.append(blocks.ravel())
        return np.concatenate(parts)

    def theta(self, inverse: bool = False) -> sp.csr_matrix:
        """``W^2`` (or ``W^-2``) as a sparse block-diagonal matrix."""
        rows, cols = self.K.theta_pattern
        n = self.K.dim
        return sp.csr_matrix((self.theta_data(inverse), (rows, cols)), shape=(n, n))
