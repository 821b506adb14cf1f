from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Tour:
    """Visit order ``s, targets..., s'`` with per-node visit times and positions."""

    sequence: tuple[int, ...]
    times: tuple[float, ...]
    positions: tuple[tuple[float, float], ...]
    cost: float

    @property
    def targets(self) -> tuple[int, ...]:
        return self.sequence[1:-1]

    @property
    def edges(self) -> tuple[tuple[int, int], ...]:
        return tuple(zip(self.sequence[:-1], self.sequence[1:]))

    @staticmethod
    def from_points(sequence, times, positions) -> Tour:
        pos = tuple((float(p[0]), float(p[1])) for p in positions)
        return Tour(tuple(int(v) for v in sequence), tuple(float(t) for t in times), pos,
                    path_length(pos))


def path_length(positions) -> float:
    pts = np.asarray(positions, dtype=float)
    if len(pts) < 2:
        return 0.0
    return float(sum(math.hypot(*(b - a)) for a, b in zip(pts[:-1], pts[1:])))


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def serialize_tour(tour: Tour) -> str:
    lines = ["mttsp-tour 1", f"cost {_fmt(tour.cost)}"]
    for node, t, (x, y) in zip(tour.sequence, tour.times, tour.positions):
        lines.append(f"visit {node} {_fmt(t)} {_fmt(x)} {_fmt(y)}")
    return "\n".join(lines) + "\n"


def parse_tour(text: str) -> Tour:
    from .instance import InstanceError, tokenize

    seq, times, pos = [], [], []
    header = False
    for lineno, key, values in tokenize(text):
        if not header:
            if key != "mttsp-tour":
                raise InstanceError("file must start with 'mttsp-tour 1'", lineno, "version")
            header = True
        elif key == "cost":
            continue
        elif key == "visit":
            if len(values) != 4:
                raise InstanceError("expected: visit <node> <t> <x> <y>", lineno, "visit")
            try:
                seq.append(int(values[0]))
                t, x, y = (float(v) for v in values[1:])
            except ValueError as exc:
                raise InstanceError(str(exc), lineno, "visit") from None
            times.append(t)
            pos.append((x, y))
        else:
            raise InstanceError(f"unknown field {key!r}", lineno, key)
    if not header:
        raise InstanceError("empty file", 1, "version")
    return Tour.from_points(seq, times, pos)
