"""Directed routing graph over depot copies and targets, plus node space-time sets.

Nodes are integers: ``0`` is the start depot ``s``, ``1..n`` are targets and
``n + 1`` is the return copy ``s'``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instance import Instance, SpaceTimePoint

SOURCE = 0


@dataclass(frozen=True)
class Graph:
    n: int
    edges: tuple[tuple[int, int], ...]

    @property
    def source(self) -> int:
        return SOURCE

    @property
    def sink(self) -> int:
        return self.n + 1

    @property
    def nodes(self) -> range:
        return range(self.n + 2)

    @property
    def targets(self) -> range:
        return range(1, self.n + 1)

    def __post_init__(self):
        index = {e: k for k, e in enumerate(self.edges)}
        e_in: dict[int, list[int]] = {v: [] for v in self.nodes}
        e_out: dict[int, list[int]] = {v: [] for v in self.nodes}
        for k, (i, j) in enumerate(self.edges):
            e_out[i].append(k)
            e_in[j].append(k)
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_in", {v: tuple(ks) for v, ks in e_in.items()})
        object.__setattr__(self, "_out", {v: tuple(ks) for v, ks in e_out.items()})

    def edge_id(self, tail: int, head: int) -> int:
        return self._index[(tail, head)]

    def e_in(self, node: int) -> tuple[int, ...]:
        return self._in[node]

    def e_out(self, node: int) -> tuple[int, ...]:
        return self._out[node]

    def node_label(self, node: int) -> str:
        if node == SOURCE:
            return "s"
        if node == self.sink:
            return "s'"
        return str(node)


def build(instance: Instance) -> Graph:
    """Edges s->i, i->j (i != j) and i->s' over targets, sorted by (tail, head)."""
    n = instance.n
    sink = n + 1
    edges = [(SOURCE, i) for i in range(1, n + 1)]
    for i in range(1, n + 1):
        edges.extend((i, j) for j in range(1, n + 1) if j != i)
        edges.append((i, sink))
    return Graph(n, tuple(sorted(edges)))


@dataclass(frozen=True)
class SegmentSet:
    """Space-time segment traced by a node during its window (possibly a point)."""

    start: SpaceTimePoint
    end: SpaceTimePoint
    velocity: tuple[float, float]

    @property
    def t_lo(self) -> float:
        return self.start.t

    @property
    def t_hi(self) -> float:
        return self.end.t

    @property
    def ref_pos(self) -> np.ndarray:
        """Position extrapolated to absolute time 0."""
        return np.array([self.start.x, self.start.y]) - self.start.t * np.asarray(self.velocity)

    def position(self, t: float) -> np.ndarray:
        return self.ref_pos + t * np.asarray(self.velocity)

    def distance(self, point, t: float) -> float:
        """Distance of ``(point, t)`` from the segment's trajectory law (ignores the window)."""
        return float(np.linalg.norm(np.asarray(point, dtype=float) - self.position(t)))

    def contains(self, point, t: float, tol: float = 1e-6) -> bool:
        return self.t_lo - tol <= t <= self.t_hi + tol and self.distance(point, t) <= tol


def node_set(instance: Instance, node: int) -> SegmentSet:
    depot = tuple(float(c) for c in instance.depot)
    if node == SOURCE:
        p = SpaceTimePoint(depot[0], depot[1], 0.0)
        return SegmentSet(p, p, (0.0, 0.0))
    if node == instance.n + 1:
        return SegmentSet(SpaceTimePoint(depot[0], depot[1], 0.0),
                          SpaceTimePoint(depot[0], depot[1], float(instance.T)), (0.0, 0.0))
    if not 1 <= node <= instance.n:
        raise KeyError(f"node {node} not in graph with {instance.n} targets")
    tg = instance.target(node)
    lo, hi = tg.window
    a, b = tg.position(lo), tg.position(hi)
    return SegmentSet(SpaceTimePoint(float(a[0]), float(a[1]), float(lo)),
                      SpaceTimePoint(float(b[0]), float(b[1]), float(hi)),
                      (float(tg.velocity[0]), float(tg.velocity[1])))
