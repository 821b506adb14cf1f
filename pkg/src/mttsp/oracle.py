"""Ground truth that does not go through the mixed-binary formulations.

Everything here works per visit sequence: a small convex program for the best
times along a fixed order, exhaustive enumeration of orders, a pointwise tour
checker and greedy quickest tours.  Conic solves use the Clarabel backend so
that agreement with branch-and-bound is not agreement of one solver with
itself.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .conic import FREE, NONNEG, SOC, ProgramBuilder, solve
from .graph import node_set
from .instance import Instance, earliest_intercept, generating_tour, target_position
from .tour import Tour, path_length

MAX_BRUTE_FORCE_N = 10
FEASIBILITY_TOL = 1e-6
ORACLE_TOL = 1e-10


def _targets_only(instance: Instance, sequence: Sequence[int]) -> tuple[int, ...]:
    seq = tuple(int(v) for v in sequence)
    if seq and seq[0] == 0 and seq[-1] == instance.n + 1:
        seq = seq[1:-1]
    if sorted(seq) != list(range(1, instance.n + 1)):
        raise ValueError(f"sequence {seq} must visit every target 1..{instance.n} exactly once")
    return seq


def fixed_sequence_optimum(instance: Instance, sequence: Sequence[int],
                           backend: str = "clarabel", tol: float = ORACLE_TOL) -> Tour | None:
    """Shortest tour visiting targets in the given order; ``None`` if time-infeasible.

    ``sequence`` lists targets, optionally wrapped in ``0`` and ``n + 1``.
    Visit times are the only decisions; positions follow the trajectories.
    """
    seq = (0, *_targets_only(instance, sequence), instance.n + 1)
    segs = [node_set(instance, v) for v in seq]
    bld = ProgramBuilder()
    t = [bld.var(FREE, f"t[{k}]") for k in range(len(seq))]
    bld.row({t[0]: 1.0}, 0.0, "start")
    for k, seg in enumerate(segs[1:], start=1):
        lo = bld.var(NONNEG, f"lo_slack[{k}]")
        hi = bld.var(NONNEG, f"hi_slack[{k}]")
        bld.row({t[k]: 1.0, lo: -1.0}, seg.t_lo, f"window_lo[{k}]")
        bld.row({t[k]: 1.0, hi: 1.0}, seg.t_hi, f"window_hi[{k}]")
    for k in range(len(seq) - 1):
        a, b = segs[k], segs[k + 1]
        d, dx, dy = bld.add(SOC, [f"d[{k}]", f"dx[{k}]", f"dy[{k}]"])
        w = bld.var(NONNEG, f"speed_slack[{k}]")
        delta = b.ref_pos - a.ref_pos
        for axis, col in enumerate((dx, dy)):
            bld.row({col: 1.0, t[k + 1]: -b.velocity[axis], t[k]: a.velocity[axis]},
                    float(delta[axis]), f"leg_{'xy'[axis]}[{k}]")
        bld.row({t[k + 1]: instance.v_max, t[k]: -instance.v_max, d: -1.0, w: -1.0}, 0.0,
                f"speed[{k}]")
        bld.cost(d, 1.0)
    res = solve(bld.build(), tol=tol, backend=backend)
    if res.status != "optimal":
        return None
    times = [float(res.primal[c]) for c in t]
    times[0] = 0.0
    positions = [seg.position(tk) for seg, tk in zip(segs, times)]
    return Tour.from_points(seq, times, positions)


def _prefix_feasible(instance: Instance, prefix: Sequence[int]) -> bool:
    out = generating_tour(instance, prefix, instance.v_max, respect_windows=True)
    if out is None:
        return False
    if len(prefix) == instance.n:
        return out[1] <= instance.T + FEASIBILITY_TOL
    return True


def brute_force(instance: Instance, max_n: int = MAX_BRUTE_FORCE_N,
                backend: str = "clarabel") -> Tour | None:
    """Best tour over all visit orders; ``None`` if no order is feasible.

    Orders are explored in lexicographic order; a prefix is dropped once its
    greedy earliest arrivals miss a window (arriving earlier never hurts, as
    the agent can shadow a slower target).  Ties keep the first order found.
    """
    n = instance.n
    if n > max_n:
        raise ValueError(f"brute force limited to n <= {max_n}, got {n}")
    best: Tour | None = None

    def visit(prefix: list[int], remaining: list[int]):
        nonlocal best
        if prefix and not _prefix_feasible(instance, prefix):
            return
        if not remaining:
            tour = fixed_sequence_optimum(instance, prefix, backend=backend)
            if tour is not None and (best is None or tour.cost < best.cost - 1e-9 * max(1.0, best.cost)):
                best = tour
            return
        for k, nxt in enumerate(remaining):
            visit(prefix + [nxt], remaining[:k] + remaining[k + 1:])

    visit([], list(range(1, n + 1)))
    return best


def euclidean_tour_length(instance: Instance) -> tuple[float, tuple[int, ...]]:
    """Shortest closed walk depot -> all targets -> depot by distance alone.

    Target positions are taken at time 0; meaningful for stationary targets.
    Returns ``(length, target_order)``.
    """
    depot = np.asarray(instance.depot, dtype=float)
    pts = {tg.id: np.asarray(tg.ref_pos, dtype=float) for tg in instance.targets}
    best = (math.inf, ())
    for order in itertools.permutations(sorted(pts)):
        length = path_length([depot, *(pts[i] for i in order), depot])
        if length < best[0] - 1e-12:
            best = (length, order)
    return best


def quickest_tour(instance: Instance, sequence: Sequence[int], v_max: float | None = None,
                  respect_windows: bool = True) -> float | None:
    """Completion time of the greedy earliest-arrival tour along ``sequence``.

    Windows are the instance's own unless ``respect_windows`` is False (full
    horizon).  ``None`` if some intercept is impossible or the return to the
    depot misses the horizon.
    """
    seq = _targets_only(instance, sequence)
    v = instance.v_max if v_max is None else v_max
    out = generating_tour(instance, seq, v, respect_windows=respect_windows)
    if out is None:
        return None
    return out[1] if out[1] <= instance.T else None


@dataclass(frozen=True)
class Violation:
    kind: str
    node: int | None
    magnitude: float
    message: str


def check_feasible(instance: Instance, tour: Tour, tol: float = FEASIBILITY_TOL) -> list[Violation]:
    """Every way ``tour`` fails to be a feasible agent tour; empty means feasible."""
    out: list[Violation] = []
    seq = tuple(tour.sequence)
    sink = instance.n + 1
    if len(tour.times) != len(seq) or len(tour.positions) != len(seq):
        return [Violation("structure", None, math.inf, "times/positions length mismatch")]
    if not seq or seq[0] != 0 or seq[-1] != sink:
        out.append(Violation("structure", None, math.inf, "tour must start at s and end at s'"))
    inner = seq[1:-1]
    if sorted(inner) != list(range(1, instance.n + 1)):
        out.append(Violation("structure", None, math.inf,
                             f"targets {inner} are not a permutation of 1..{instance.n}"))
    if out:
        return out
    if abs(tour.times[0]) > tol:
        out.append(Violation("start", 0, abs(tour.times[0]), f"t_s = {tour.times[0]:.9g}, expected 0"))
    for v, t, p in zip(seq, tour.times, tour.positions):
        seg = node_set(instance, v)
        excess = max(seg.t_lo - t, t - seg.t_hi, 0.0)
        if excess > tol:
            out.append(Violation("window", v, excess,
                                 f"node {v}: t = {t:.9g} outside [{seg.t_lo:.9g}, {seg.t_hi:.9g}]"))
        off = seg.distance(p, t)
        if off > tol:
            out.append(Violation("trajectory", v, off, f"node {v}: {off:.3g} away from its trajectory"))
    for k in range(len(seq) - 1):
        dist = math.dist(tour.positions[k], tour.positions[k + 1])
        reach = instance.v_max * (tour.times[k + 1] - tour.times[k])
        if dist > reach + tol:
            out.append(Violation("speed", seq[k + 1], dist - reach,
                                 f"leg {seq[k]}->{seq[k + 1]}: length {dist:.9g} exceeds reach {reach:.9g}"))
    length = path_length(tour.positions)
    if abs(length - tour.cost) > tol * max(1.0, length):
        out.append(Violation("cost", None, abs(length - tour.cost),
                             f"stated cost {tour.cost:.9g} != path length {length:.9g}"))
    return out


def intercept_position(instance: Instance, target_id: int, t: float) -> np.ndarray:
    return target_position(instance.target(target_id), t)


__all__ = [
    "Tour", "Violation", "fixed_sequence_optimum", "brute_force", "euclidean_tour_length",
    "quickest_tour", "check_feasible", "earliest_intercept", "intercept_position",
]
