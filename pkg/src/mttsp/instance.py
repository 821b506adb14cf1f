"""Instances of the moving-target TSP: data model, generation, kinematics, IO.

Targets move along straight lines at constant velocity.  A target stores its
position at absolute time 0 (``ref_pos``); the position at the start of its
window is derived from it, so windows can be reassigned over a fixed set of
trajectories.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

FORMAT_VERSION = 1

#: Retry cap for the random visit sequences used by :func:`assign_windows`.
MAX_SEQUENCE_ATTEMPTS = 1000


class InstanceError(ValueError):
    """Raised for invalid instance data or malformed instance files."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class WindowAssignmentError(RuntimeError):
    """No sequence with a quick enough tour was found; reseed and retry."""


@dataclass(frozen=True)
class SpaceTimePoint:
    x: float
    y: float
    t: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.t])


@dataclass(frozen=True)
class Target:
    id: int
    ref_pos: tuple[float, float]
    velocity: tuple[float, float]
    window: tuple[float, float]

    @property
    def speed(self) -> float:
        return math.hypot(*self.velocity)

    def position(self, t: float) -> np.ndarray:
        return target_position(self, t)

    @property
    def window_start_pos(self) -> np.ndarray:
        return self.position(self.window[0])

    @property
    def window_end_pos(self) -> np.ndarray:
        return self.position(self.window[1])


@dataclass(frozen=True)
class Instance:
    """Depot, horizon, agent speed cap and the moving targets.

    The depot sits at ``depot`` with zero velocity.  The start copy ``s`` has
    window ``[0, 0]`` and the return copy ``s'`` has window ``[0, T]``.
    """

    S: float
    T: float
    v_max: float
    depot: tuple[float, float] = (0.0, 0.0)
    targets: tuple[Target, ...] = field(default_factory=tuple)

    @property
    def n(self) -> int:
        return len(self.targets)

    @property
    def R(self) -> float:
        return math.sqrt(2.0) * self.S

    def target(self, target_id: int) -> Target:
        return self.targets[target_id - 1]

    def with_vmax(self, v_max: float) -> Instance:
        return dataclasses.replace(self, v_max=float(v_max))

    def with_windows(self, windows: Sequence[tuple[float, float]]) -> Instance:
        if len(windows) != self.n:
            raise InstanceError(f"expected {self.n} windows, got {len(windows)}")
        targets = tuple(
            dataclasses.replace(tg, window=(float(lo), float(hi)))
            for tg, (lo, hi) in zip(self.targets, windows)
        )
        return dataclasses.replace(self, targets=targets)

    def validate(self) -> Instance:
        """Check the instance invariants; returns ``self`` so calls chain."""
        for name in ("S", "T", "v_max"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise InstanceError(f"must be a positive finite number, got {value!r}", field=name)
        if not all(math.isfinite(c) for c in self.depot):
            raise InstanceError("depot must be finite", field="depot")
        for k, tg in enumerate(self.targets, start=1):
            if tg.id != k:
                raise InstanceError(f"target ids must be 1..n in order, found {tg.id} at position {k}",
                                    field="id")
            lo, hi = tg.window
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise InstanceError(f"target {tg.id}: window must be finite", field="window")
            if lo > hi:
                raise InstanceError(f"target {tg.id}: window start {lo} exceeds end {hi}",
                                    field="window")
            if lo < 0 or hi > self.T:
                raise InstanceError(f"target {tg.id}: window [{lo}, {hi}] outside [0, {self.T}]",
                                    field="window")
            if not all(math.isfinite(c) for c in (*tg.ref_pos, *tg.velocity)):
                raise InstanceError(f"target {tg.id}: trajectory must be finite", field="velocity")
            if tg.speed > self.v_max:
                raise InstanceError(
                    f"target {tg.id}: speed {tg.speed:.6g} exceeds agent speed {self.v_max}",
                    field="velocity")
        return self


def target_position(target: Target, t: float) -> np.ndarray:
    """Position of ``target`` at absolute time ``t``."""
    return np.asarray(target.ref_pos, dtype=float) + t * np.asarray(target.velocity, dtype=float)


def earliest_intercept(agent_pos, agent_time: float, target: Target, v_max: float,
                       window: tuple[float, float] | None = None) -> float | None:
    """Earliest time an agent leaving ``agent_pos`` at ``agent_time`` can meet ``target``.

    The meeting time is restricted to the target's window (or ``window`` when
    given).  Returns ``None`` when no meeting time in the window exists.
    """
    lo, hi = target.window if window is None else window
    a = np.asarray(agent_pos, dtype=float)
    u = np.asarray(target.velocity, dtype=float)
    d = target_position(target, agent_time) - a
    tau_lo = max(lo - agent_time, 0.0)
    tau_hi = hi - agent_time
    if tau_hi < tau_lo:
        return None

    # reach(tau) = v_max^2 tau^2 - |d + tau u|^2 >= 0  <=>  agent can be there at agent_time + tau
    qa = v_max * v_max - float(u @ u)
    qb = -2.0 * float(d @ u)
    qc = -float(d @ d)
    scale = 1e-12 * max(1.0, float(d @ d))

    def reachable(tau: float) -> bool:
        return qa * tau * tau + qb * tau + qc >= -scale

    if reachable(tau_lo):
        return agent_time + tau_lo
    roots = []
    if qa == 0.0:
        if qb != 0.0:
            roots.append(-qc / qb)
    else:
        disc = qb * qb - 4.0 * qa * qc
        if disc >= 0.0:
            sq = math.sqrt(disc)
            q = -0.5 * (qb + math.copysign(sq, qb))
            if q != 0.0:
                roots.extend([q / qa, qc / q])
            else:
                roots.append(-qb / (2.0 * qa))
    for tau in sorted(r for r in roots if r > tau_lo):
        if tau <= tau_hi and reachable(tau):
            return agent_time + tau
    return None


def _check_generate_params(n, S, T, speed_range):
    if int(n) != n or n < 1:
        raise InstanceError(f"n must be a positive integer, got {n!r}", field="n")
    lo, hi = speed_range
    if not (0 <= lo <= hi) or not math.isfinite(hi):
        raise InstanceError(f"speed range must satisfy 0 <= lo <= hi, got {speed_range!r}",
                            field="speed_range")
    if S <= 0 or T <= 0:
        raise InstanceError("S and T must be positive", field="S" if S <= 0 else "T")
    if lo * T > S * math.sqrt(2.0):
        raise InstanceError("no trajectory at the minimum speed fits in the square over the horizon",
                            field="speed_range")


def generate(n: int, seed: int, S: float = 100.0, T: float = 150.0,
             speed_range: tuple[float, float] = (0.5, 1.0), v_max: float = 4.0) -> Instance:
    """Random instance: depot at the origin, ``n`` targets moving in the square.

    Every target keeps a constant speed drawn from ``speed_range`` and stays in
    ``[-S/2, S/2]^2`` for the whole horizon ``[0, T]``.  Windows span the full
    horizon; use :func:`assign_windows` to tighten them.
    """
    _check_generate_params(n, S, T, speed_range)
    rng = np.random.default_rng(seed)
    half = S / 2.0
    targets = []
    for k in range(1, int(n) + 1):
        # displacement over [0, T] must fit inside the square on both axes
        while True:
            speed = rng.uniform(*speed_range)
            heading = rng.uniform(0.0, 2.0 * math.pi)
            vx, vy = speed * math.cos(heading), speed * math.sin(heading)
            if abs(vx) * T <= S and abs(vy) * T <= S:
                break
        x0 = rng.uniform(-half - min(0.0, vx * T), half - max(0.0, vx * T))
        y0 = rng.uniform(-half - min(0.0, vy * T), half - max(0.0, vy * T))
        targets.append(Target(k, (float(x0), float(y0)), (float(vx), float(vy)), (0.0, float(T))))
    return Instance(S=float(S), T=float(T), v_max=float(v_max), targets=tuple(targets))


def _place_window(visit: float, duration: float, T: float) -> tuple[float, float]:
    duration = min(duration, T)
    lo = visit - duration / 2.0
    hi = visit + duration / 2.0
    if lo < 0.0:
        lo, hi = 0.0, duration
    elif hi > T:
        lo, hi = T - duration, T
    return float(lo), float(hi)


def generating_tour(instance: Instance, sequence: Sequence[int], v_max: float,
                    respect_windows: bool = False):
    """Greedy earliest-arrival visit times along ``sequence``.

    Windows span the full horizon unless ``respect_windows``.  Returns
    ``(visit_times, completion_time)`` or ``None`` if some target cannot be
    reached in time.
    """
    horizon = (0.0, instance.T)
    pos = np.asarray(instance.depot, dtype=float)
    t = 0.0
    times = {}
    for tid in sequence:
        tg = instance.target(tid)
        t_next = earliest_intercept(pos, t, tg, v_max, window=None if respect_windows else horizon)
        if t_next is None:
            return None
        times[tid] = t_next
        pos, t = target_position(tg, t_next), t_next
    back = t + float(np.linalg.norm(pos - np.asarray(instance.depot))) / v_max
    return times, back


def assign_windows(instance: Instance, durations: Iterable[float], v_min_agent: float = 4.0,
                   seed: int = 0, max_attempts: int = MAX_SEQUENCE_ATTEMPTS) -> list[Instance]:
    """Windows of each duration around the visit times of a random quick tour.

    A random visit order is drawn until its earliest-arrival tour at speed
    ``v_min_agent`` returns to the depot by ``T``.  Each target then gets, per
    duration, a window centred on its visit time and shifted back inside
    ``[0, T]``.  Windows are nested across durations, and every returned
    instance admits the generating tour for any ``v_max >= v_min_agent``.
    """
    durations = [float(d) for d in durations]
    if not durations:
        raise InstanceError("at least one duration is required", field="durations")
    if any(d <= 0 for d in durations):
        raise InstanceError("durations must be positive", field="durations")
    if durations != sorted(durations):
        raise InstanceError("durations must be sorted ascending", field="durations")
    rng = np.random.default_rng(seed)
    ids = np.arange(1, instance.n + 1)
    for _ in range(max_attempts):
        sequence = [int(i) for i in rng.permutation(ids)]
        tour = generating_tour(instance, sequence, v_min_agent)
        if tour is None:
            continue
        times, completion = tour
        if completion > instance.T:
            continue
        out = []
        for d in durations:
            windows = [_place_window(times[tg.id], d, instance.T) for tg in instance.targets]
            out.append(instance.with_windows(windows))
        return out
    raise WindowAssignmentError(
        f"no visit sequence finished within T={instance.T} after {max_attempts} attempts")


# -- serialization ---------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def serialize(instance: Instance) -> str:
    """Canonical text form; ``parse(serialize(I)) == I`` exactly."""
    lines = [
        f"mttsp-instance {FORMAT_VERSION}",
        f"S {_fmt(instance.S)}",
        f"T {_fmt(instance.T)}",
        f"vmax {_fmt(instance.v_max)}",
        f"depot {_fmt(instance.depot[0])} {_fmt(instance.depot[1])}",
        f"targets {instance.n}",
    ]
    for tg in instance.targets:
        lines.append(
            f"target {tg.id} ref_pos {_fmt(tg.ref_pos[0])} {_fmt(tg.ref_pos[1])}"
            f" velocity {_fmt(tg.velocity[0])} {_fmt(tg.velocity[1])}"
            f" window {_fmt(tg.window[0])} {_fmt(tg.window[1])}"
        )
    return "\n".join(lines) + "\n"


def tokenize(text: str):
    """Yield ``(line_number, key, values)`` for each non-blank, non-comment line."""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *values = line.split()
        yield lineno, key, values


def _floats(values, count, lineno, name):
    if len(values) != count:
        raise InstanceError(f"expected {count} number(s), got {len(values)}", lineno, name)
    try:
        out = [float(v) for v in values]
    except ValueError as exc:
        raise InstanceError(f"not a number: {exc}", lineno, name) from None
    if not all(math.isfinite(v) for v in out):
        raise InstanceError("numbers must be finite", lineno, name)
    return out


def _parse_target(values, lineno) -> Target:
    if not values:
        raise InstanceError("missing target id", lineno, "id")
    try:
        tid = int(values[0])
    except ValueError:
        raise InstanceError(f"target id must be an integer, got {values[0]!r}", lineno, "id") from None
    fields = {}
    rest = values[1:]
    i = 0
    while i < len(rest):
        name = rest[i]
        if name not in ("ref_pos", "velocity", "window"):
            raise InstanceError(f"unknown target field {name!r}", lineno, name)
        if name in fields:
            raise InstanceError("duplicate target field", lineno, name)
        fields[name] = _floats(rest[i + 1:i + 3], 2, lineno, name)
        i += 3
    for name in ("ref_pos", "velocity", "window"):
        if name not in fields:
            raise InstanceError(f"target {tid} is missing '{name}'", lineno, name)
    lo, hi = fields["window"]
    if lo > hi:
        raise InstanceError(f"window start {lo} exceeds end {hi}", lineno, "window")
    return Target(tid, tuple(fields["ref_pos"]), tuple(fields["velocity"]), (lo, hi))


def parse(text: str) -> Instance:
    """Inverse of :func:`serialize`; errors name the offending line and field."""
    header = None
    scalars: dict[str, float] = {}
    depot = None
    declared = None
    targets: list[Target] = []
    last_line = 0
    for lineno, key, values in tokenize(text):
        last_line = lineno
        if header is None:
            if key != "mttsp-instance":
                raise InstanceError("file must start with 'mttsp-instance <version>'", lineno, "version")
            if values != [str(FORMAT_VERSION)]:
                raise InstanceError(f"unsupported version {' '.join(values)!r}", lineno, "version")
            header = FORMAT_VERSION
            continue
        if key in ("S", "T", "vmax"):
            if key in scalars:
                raise InstanceError("duplicate field", lineno, key)
            scalars[key] = _floats(values, 1, lineno, key)[0]
        elif key == "depot":
            depot = tuple(_floats(values, 2, lineno, "depot"))
        elif key == "targets":
            try:
                declared = int(values[0]) if len(values) == 1 else None
            except ValueError:
                declared = None
            if declared is None or declared < 0:
                raise InstanceError("expected a non-negative integer", lineno, "targets")
        elif key == "target":
            targets.append(_parse_target(values, lineno))
        else:
            raise InstanceError(f"unknown field {key!r}", lineno, key)
    if header is None:
        raise InstanceError("empty file", 1, "version")
    for name in ("S", "T", "vmax"):
        if name not in scalars:
            raise InstanceError(f"missing required field '{name}'", last_line, name)
    if depot is None:
        raise InstanceError("missing required field 'depot'", last_line, "depot")
    if declared is not None and declared != len(targets):
        raise InstanceError(f"declared {declared} targets, found {len(targets)}", last_line, "targets")
    inst = Instance(S=scalars["S"], T=scalars["T"], v_max=scalars["vmax"], depot=depot,
                    targets=tuple(targets))
    return inst.validate()


def load(path) -> Instance:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def save(instance: Instance, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize(instance))
