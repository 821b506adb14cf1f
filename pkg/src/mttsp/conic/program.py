"""Cone programs in equality standard form.

    minimize    c'x + offset
    subject to  A x = b,  x in K

``K`` is a product of blocks laid over consecutive columns of ``x``: free
variables, the nonnegative orthant, and second-order cones
``{(t, u): t >= ||u||}`` whose first coordinate is the radial term.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

FREE, NONNEG, SOC = "free", "nonneg", "soc"
_KINDS = (FREE, NONNEG, SOC)


@dataclass(frozen=True)
class Cone:
    kind: str
    dim: int

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown cone kind {self.kind!r}")
        if self.dim < 1 or (self.kind == SOC and self.dim < 2):
            raise ValueError(f"invalid dimension {self.dim} for {self.kind} cone")


@dataclass
class ConicProgram:
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    cones: tuple[Cone, ...]
    offset: float = 0.0
    var_names: tuple[str, ...] | None = None
    row_names: tuple[str, ...] | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.A = sp.csr_matrix(self.A, dtype=float)
        self.cones = tuple(self.cones)
        m, n = self.A.shape
        if self.c.shape != (n,):
            raise ValueError(f"cost has shape {self.c.shape}, expected ({n},)")
        if self.b.shape != (m,):
            raise ValueError(f"rhs has shape {self.b.shape}, expected ({m},)")
        if sum(k.dim for k in self.cones) != n:
            raise ValueError("cone layout does not cover the columns exactly")
        if self.var_names is not None and len(self.var_names) != n:
            raise ValueError("var_names length mismatch")
        if self.row_names is not None and len(self.row_names) != m:
            raise ValueError("row_names length mismatch")

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def blocks(self):
        """Yield ``(cone, slice)`` pairs in column order."""
        start = 0
        for cone in self.cones:
            yield cone, slice(start, start + cone.dim)
            start += cone.dim

    def kind_mask(self, kind: str) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        for cone, sl in self.blocks():
            if cone.kind == kind:
                mask[sl] = True
        return mask

    def objective(self, x) -> float:
        return float(self.c @ x) + self.offset

    def var_name(self, j: int) -> str:
        return self.var_names[j] if self.var_names is not None else f"x{j}"

    def row_name(self, i: int) -> str:
        return self.row_names[i] if self.row_names is not None else f"r{i}"


def merge_cones(cones: Iterable[Cone]) -> tuple[Cone, ...]:
    """Coalesce adjacent free/nonneg blocks; second-order cones stay separate."""
    out: list[Cone] = []
    for cone in cones:
        if out and cone.kind != SOC and out[-1].kind == cone.kind:
            out[-1] = Cone(cone.kind, out[-1].dim + cone.dim)
        else:
            out.append(cone)
    return tuple(out)


@dataclass
class ProgramBuilder:
    """Incremental assembly of a :class:`ConicProgram` with named rows and columns."""

    _cones: list[Cone] = field(default_factory=list)
    _names: list[str] = field(default_factory=list)
    _cost: dict[int, float] = field(default_factory=dict)
    _rows: list[tuple[dict[int, float], float, str]] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self._names)

    def add(self, kind: str, names: Sequence[str]) -> list[int]:
        """Append a block of ``len(names)`` columns; a SOC block is a single cone."""
        start = self.n
        if kind == SOC:
            self._cones.append(Cone(SOC, len(names)))
        else:
            self._cones.extend(Cone(kind, 1) for _ in names)
        self._names.extend(names)
        return list(range(start, self.n))

    def var(self, kind: str, name: str) -> int:
        return self.add(kind, [name])[0]

    def cost(self, col: int, value: float) -> None:
        self._cost[col] = self._cost.get(col, 0.0) + value

    def row(self, coeffs: Mapping[int, float], rhs: float, name: str) -> int:
        merged: dict[int, float] = {}
        for col, val in coeffs.items():
            if val != 0.0:
                merged[col] = merged.get(col, 0.0) + float(val)
        self._rows.append((merged, float(rhs), name))
        return len(self._rows) - 1

    def build(self, offset: float = 0.0) -> ConicProgram:
        n = self.n
        rows, cols, vals = [], [], []
        for i, (coeffs, _, _) in enumerate(self._rows):
            for j, v in coeffs.items():
                rows.append(i)
                cols.append(j)
                vals.append(v)
        A = sp.csr_matrix((vals, (rows, cols)), shape=(len(self._rows), n))
        c = np.zeros(n)
        for j, v in self._cost.items():
            c[j] = v
        return ConicProgram(
            c=c, A=A, b=np.array([r[1] for r in self._rows], dtype=float),
            cones=merge_cones(self._cones), offset=offset,
            var_names=tuple(self._names), row_names=tuple(r[2] for r in self._rows),
        )


def dump(program: ConicProgram, fh) -> None:
    """Write a plain-text listing for cross-checking with other tools.

    Sections: a header line, one ``var`` line per column (index, name, cone
    block, cost), one ``row`` line per equality (index, name, rhs) followed by
    its ``coef`` lines.
    """
    fh.write(f"conic-program vars {program.n} rows {program.m} offset {program.offset:.17g}\n")
    for blk, (cone, sl) in enumerate(program.blocks()):
        for j in range(sl.start, sl.stop):
            fh.write(f"var {j} {program.var_name(j)} {cone.kind}{blk} {program.c[j]:.17g}\n")
    A = program.A
    for i in range(program.m):
        fh.write(f"row {i} {program.row_name(i)} = {program.b[i]:.17g}\n")
        for k in range(A.indptr[i], A.indptr[i + 1]):
            j = A.indices[k]
            fh.write(f"  coef {j} {program.var_name(j)} {A.data[k]:.17g}\n")
