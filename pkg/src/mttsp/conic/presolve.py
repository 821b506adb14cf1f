"""Eliminate free columns by sparse Gaussian elimination on the equality rows.

The reduced program has only conic (nonnegative / second-order) columns, which
is the form the interior-point solver works in.  ``Reduction.postsolve`` maps
a reduced primal-dual pair back to the original columns and rows; the dual
slack of the original program equals the reduced one on conic columns and is
zero on eliminated columns.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .program import FREE, Cone, ConicProgram

_PIVOT_THRESHOLD = 0.1
_DROP = 1e-13


class PresolveInfeasible(Exception):
    """An equality row reduced to ``0 = b`` with ``b`` nonzero."""


class PresolveUnbounded(Exception):
    """A free column with nonzero cost appears in no row."""


@dataclass
class Reduction:
    n: int
    m: int
    cone_cols: np.ndarray
    rows: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    c: np.ndarray
    offset: float
    cones: tuple[Cone, ...]
    steps: list

    def postsolve(self, x_red, y_red, s_red):
        x = np.zeros(self.n)
        x[self.cone_cols] = x_red
        y = np.zeros(self.m)
        y[self.rows] = y_red
        s = np.zeros(self.n)
        s[self.cone_cols] = s_red
        for row, col, prow, rhs, colvals, cost in reversed(self.steps):
            if row is None:
                continue
            piv = prow[col]
            acc = rhs
            for k, v in prow.items():
                if k != col:
                    acc -= v * x[k]
            x[col] = acc / piv
            acc = cost
            for r, v in colvals.items():
                acc -= v * y[r]
            y[row] = acc / piv
        return x, y, s


def eliminate_free(program: ConicProgram) -> Reduction:
    m, n = program.m, program.n
    free = program.kind_mask(FREE)
    A = program.A.tocsr()
    rows = []
    for i in range(m):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        rows.append(dict(zip(A.indices[lo:hi].tolist(), A.data[lo:hi].tolist())))
    b = program.b.astype(float).tolist()
    c = program.c.astype(float).copy()
    offset = float(program.offset)
    col_rows: dict[int, set[int]] = {int(j): set() for j in np.flatnonzero(free)}
    for i, row in enumerate(rows):
        for j in row:
            if free[j]:
                col_rows[j].add(i)
    active = np.ones(m, dtype=bool)
    steps = []
    heap = [(len(rs), j) for j, rs in col_rows.items()]
    heapq.heapify(heap)
    done: set[int] = set()
    while heap:
        count, j = heapq.heappop(heap)
        if j in done:
            continue
        R = col_rows[j]
        if count != len(R):
            heapq.heappush(heap, (len(R), j))
            continue
        done.add(j)
        if not R:
            if abs(c[j]) > 1e-12 * (1.0 + np.abs(c).max()):
                raise PresolveUnbounded(f"free column {program.var_name(j)} has cost but no rows")
            steps.append((None, j, None, 0.0, None, 0.0))
            continue
        big = max(abs(rows[i][j]) for i in R)
        candidates = [i for i in R if abs(rows[i][j]) >= _PIVOT_THRESHOLD * big]
        piv_row = min(candidates, key=lambda i: (len(rows[i]), -abs(rows[i][j]), i))
        prow = rows[piv_row]
        piv = prow[j]
        colvals = {}
        for r in sorted(R):
            if r == piv_row:
                continue
            target = rows[r]
            f = target[j] / piv
            colvals[r] = target[j]
            for k, v in prow.items():
                if k == j:
                    target.pop(k, None)
                    continue
                old = target.get(k, 0.0)
                new = old - f * v
                if abs(new) <= _DROP * max(abs(old), abs(f * v)):
                    if k in target:
                        del target[k]
                        if free[k]:
                            col_rows[k].discard(r)
                else:
                    if k not in target and free[k]:
                        col_rows[k].add(r)
                    target[k] = new
            b[r] -= f * b[piv_row]
            col_rows[j].discard(r)
        cost = float(c[j])
        if cost != 0.0:
            f = cost / piv
            for k, v in prow.items():
                c[k] -= f * v
            offset += f * b[piv_row]
            c[j] = 0.0
        for k in prow:
            if free[k]:
                col_rows[k].discard(piv_row)
        active[piv_row] = False
        steps.append((piv_row, j, dict(prow), b[piv_row], colvals, cost))

    cone_cols = np.flatnonzero(~free)
    col_map = -np.ones(n, dtype=int)
    col_map[cone_cols] = np.arange(cone_cols.size)
    scale = 1.0 + max((abs(v) for v in b), default=0.0)
    keep = []
    r_idx, c_idx, vals = [], [], []
    for i in np.flatnonzero(active):
        row = rows[i]
        if not row:
            if abs(b[i]) > 1e-9 * scale:
                raise PresolveInfeasible(f"row {program.row_name(i)} reduces to 0 = {b[i]:.3g}")
            continue
        for k, v in row.items():
            r_idx.append(len(keep))
            c_idx.append(col_map[k])
            vals.append(v)
        keep.append(i)
    keep = np.array(keep, dtype=int)
    A_red = sp.csr_matrix((vals, (r_idx, c_idx)), shape=(keep.size, cone_cols.size))
    cones = tuple(cone for cone, _ in program.blocks() if cone.kind != FREE)
    return Reduction(n=n, m=m, cone_cols=cone_cols, rows=keep, A=A_red,
                     b=np.array([b[i] for i in keep], dtype=float), c=c[cone_cols],
                     offset=offset, cones=cones, steps=steps)
