"""Desk-scale experiment harness: gap/runtime studies and relaxation ratios.

Experiments follow the paper's grid: ``Tw<d>`` varies the window duration at
the lowest agent speed, ``Spd<v>`` varies the speed at the middle duration.
Instances for target count ``n`` and index ``k`` are generated from seed
``base_seed + 1000 * n + k`` so cells can be rerun independently.
"""

from __future__ import annotations

import csv
import math
import os
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

from . import bnb
from .conic import OPTIMAL, solve
from .formulations import build_bigm, build_gcs, relax
from .graph import build
from .instance import (
    Instance,
    InstanceError,
    WindowAssignmentError,
    assign_windows,
    generate,
    tokenize,
)

BUILDERS = {"gcs": build_gcs, "bigm": build_bigm}
CONFIG_HEADER = "mttsp-bench"
NO_INCUMBENT_GAP = 100.0


@dataclass
class ExperimentConfig:
    target_counts: list[int] = field(default_factory=lambda: [5, 8, 10])
    instances_per_count: int = 10
    tw_durations: list[float] = field(default_factory=lambda: [25.0, 50.0, 75.0])
    vmax_values: list[float] = field(default_factory=lambda: [4.0, 6.0, 8.0])
    time_limit: float = 120.0
    base_seed: int = 0
    formulations: list[str] = field(default_factory=lambda: ["gcs", "bigm"])
    experiments: list[str] | None = None

    def __post_init__(self):
        for name in ("target_counts", "tw_durations", "vmax_values", "formulations"):
            if not getattr(self, name):
                raise InstanceError("must not be empty", field=name)
        if self.instances_per_count < 1:
            raise InstanceError("must be at least 1", field="instances_per_count")
        if not self.time_limit > 0:
            raise InstanceError("must be positive", field="time_limit")
        bad = [f for f in self.formulations if f not in BUILDERS]
        if bad:
            raise InstanceError(f"unknown formulation(s) {bad}", field="formulations")
        self.tw_durations = sorted(float(d) for d in self.tw_durations)
        if self.experiments is not None:
            unknown = set(self.experiments) - {lbl for lbl, _, _ in self._all_settings()}
            if unknown:
                raise InstanceError(f"unknown experiment(s) {sorted(unknown)}", field="experiments")

    def _all_settings(self):
        v0 = self.vmax_values[0]
        mid = self.tw_durations[len(self.tw_durations) // 2]
        out = [(f"Tw{d:g}", d, v0) for d in self.tw_durations]
        out += [(f"Spd{v:g}", mid, v) for v in self.vmax_values[1:]]
        return out

    def settings(self) -> list[tuple[str, float, float]]:
        """``(label, window duration, v_max)`` for every experiment."""
        out = self._all_settings()
        if self.experiments is not None:
            out = [s for s in out if s[0] in self.experiments]
        return out


@dataclass
class InstanceRecord:
    label: str
    n: int
    index: int
    seed: int
    formulation: str
    status: str
    z_P: float | None
    z_D: float | None
    gap_percent: float
    runtime: float
    nodes: int = 0
    ratio: float | None = None
    error: str | None = None


@dataclass
class ReportRow:
    label: str
    n: int
    formulation: str
    mean_gap: float | None
    mean_runtime: float
    mean_ratio: float | None
    records: list[InstanceRecord]


# -- configuration files ---------------------------------------------------

_LIST_KEYS = {"target_counts": int, "tw_durations": float, "vmax": float, "formulations": str,
              "experiments": str}
_SCALAR_KEYS = {"instances_per_count": int, "time_limit": float, "base_seed": int}


def parse_config(text: str) -> ExperimentConfig:
    """Read ``key value...`` lines after a ``mttsp-bench 1`` header."""
    kwargs = {}
    header = False
    for lineno, key, values in tokenize(text):
        if not header:
            if key != CONFIG_HEADER or values != ["1"]:
                raise InstanceError(f"file must start with '{CONFIG_HEADER} 1'", lineno, "version")
            header = True
            continue
        if key in kwargs or (key == "vmax" and "vmax_values" in kwargs):
            raise InstanceError("duplicate field", lineno, key)
        try:
            if key in _LIST_KEYS:
                if not values:
                    raise ValueError("expected at least one value")
                parsed = [_LIST_KEYS[key](v) for v in values]
                kwargs["vmax_values" if key == "vmax" else key] = parsed
            elif key in _SCALAR_KEYS:
                if len(values) != 1:
                    raise ValueError("expected exactly one value")
                kwargs[key] = _SCALAR_KEYS[key](values[0])
            else:
                raise InstanceError(f"unknown field {key!r}", lineno, key)
        except ValueError as exc:
            raise InstanceError(str(exc), lineno, key) from None
    if not header:
        raise InstanceError("empty file", 1, "version")
    return ExperimentConfig(**kwargs)


def serialize_config(config: ExperimentConfig) -> str:
    def fmt(vals):
        return " ".join(format(v, "g") if isinstance(v, float) else str(v) for v in vals)

    lines = [
        f"{CONFIG_HEADER} 1",
        f"target_counts {fmt(config.target_counts)}",
        f"instances_per_count {config.instances_per_count}",
        f"tw_durations {fmt(config.tw_durations)}",
        f"vmax {fmt(config.vmax_values)}",
        f"time_limit {config.time_limit:g}",
        f"base_seed {config.base_seed}",
        f"formulations {fmt(config.formulations)}",
    ]
    if config.experiments is not None:
        lines.append(f"experiments {fmt(config.experiments)}")
    return "\n".join(lines) + "\n"


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


# -- instances ---------------------------------------------------------------

def instance_seed(config: ExperimentConfig, n: int, k: int) -> int:
    return config.base_seed + 1000 * n + k


def make_instances(n: int, seed: int, durations: Iterable[float], v_min_agent: float = 4.0,
                   max_reseeds: int = 50) -> dict[float, Instance]:
    """Nested-window instances keyed by duration (reseeding if no quick tour exists)."""
    durations = sorted(float(d) for d in durations)
    for attempt in range(max_reseeds):
        s = seed + 1_000_000 * attempt
        base = generate(n, s)
        try:
            return dict(zip(durations, assign_windows(base, durations, v_min_agent, seed=s)))
        except WindowAssignmentError:
            continue
    raise WindowAssignmentError(f"no instance with a quick tour for n={n}, seed={seed}")


def experiment_instances(config: ExperimentConfig):
    """Yield ``(label, n, k, seed, instance)`` over the whole grid, in a fixed order."""
    settings = config.settings()
    for n in config.target_counts:
        for k in range(config.instances_per_count):
            seed = instance_seed(config, n, k)
            family = make_instances(n, seed, config.tw_durations, config.vmax_values[0])
            for label, duration, v in settings:
                yield label, n, k, seed, family[duration].with_vmax(v)


# -- studies -----------------------------------------------------------------

def _mean(values) -> float | None:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def _rows(records: list[InstanceRecord]) -> list[ReportRow]:
    groups: dict[tuple, list[InstanceRecord]] = {}
    for r in records:
        groups.setdefault((r.label, r.n, r.formulation), []).append(r)
    rows = []
    for (label, n, form), recs in groups.items():
        rows.append(ReportRow(
            label, n, form,
            mean_gap=_mean(r.gap_percent for r in recs),
            mean_runtime=float(np.mean([r.runtime for r in recs])),
            mean_ratio=_mean(r.ratio for r in recs),
            records=recs,
        ))
    return rows


def solve_record(instance: Instance, formulation: str, time_limit: float, label="", n=0,
                 index=0, seed=0, threads: int = 1) -> InstanceRecord:
    start = time.perf_counter()
    try:
        mbp = BUILDERS[formulation](instance, build(instance))
        res = bnb.solve_mip(mbp, time_limit=time_limit, threads=threads)
    except Exception as exc:  # recorded, the batch goes on
        return InstanceRecord(label, n, index, seed, formulation, "error", None, None,
                              NO_INCUMBENT_GAP, time.perf_counter() - start,
                              error=f"{type(exc).__name__}: {exc}")
    gap = res.gap_percent if res.incumbent is not None else NO_INCUMBENT_GAP
    return InstanceRecord(label, n, index, seed, formulation, res.status, res.z_P, res.z_D,
                          gap, res.runtime, res.nodes_explored)


def run_gap_study(config: ExperimentConfig, progress: TextIO | None = None,
                  threads: int = 1) -> list[ReportRow]:
    records = []
    for label, n, k, seed, inst in experiment_instances(config):
        for form in config.formulations:
            rec = solve_record(inst, form, config.time_limit, label, n, k, seed, threads)
            records.append(rec)
            if progress is not None:
                progress.write(f"{label} n={n} k={k} {form}: {rec.status} gap={rec.gap_percent:.4g}% "
                               f"t={rec.runtime:.2f}s\n")
    return _rows(records)


def relaxed_bound(instance: Instance, formulation: str, tol: float = 1e-8):
    """``(bound, runtime, status)`` of the continuous relaxation."""
    mbp = BUILDERS[formulation](instance, build(instance))
    res = solve(relax(mbp), tol=tol)
    value = res.objective_value if res.status == OPTIMAL else None
    return value, res.solve_time, res.status


def run_relaxation_study(config: ExperimentConfig, gap_rows: list[ReportRow] | None = None,
                         formulations: Iterable[str] = ("gcs", "bigm"),
                         progress: TextIO | None = None) -> list[ReportRow]:
    """Relaxed bound over the integer MICP-GCS best bound, per instance.

    Integer bounds come from ``gap_rows`` when they contain a GCS record for the
    instance; otherwise MICP-GCS is solved here.
    """
    known = {}
    for row in gap_rows or ():
        if row.formulation == "gcs":
            for r in row.records:
                known[(r.label, r.n, r.index)] = r.z_D
    records = []
    for label, n, k, seed, inst in experiment_instances(config):
        ref = known.get((label, n, k))
        if ref is None:
            ref = solve_record(inst, "gcs", config.time_limit, label, n, k, seed).z_D
        for form in formulations:
            try:
                value, runtime, status = relaxed_bound(inst, form)
                error = None
            except Exception:
                value, runtime, status = None, 0.0, "error"
                error = traceback.format_exc(limit=1)
            ratio = value / ref if value is not None and ref else None
            records.append(InstanceRecord(label, n, k, seed, f"relaxed-{form}", status, value, ref,
                                          math.nan, runtime, ratio=ratio, error=error))
            if progress is not None:
                progress.write(f"{label} n={n} k={k} relaxed-{form}: ratio={ratio} t={runtime:.3f}s\n")
    rows = _rows(records)
    for row in rows:
        row.mean_gap = None
    return rows


# -- output ------------------------------------------------------------------

RESULT_COLUMNS = ["label", "n", "index", "seed", "formulation", "status", "z_P", "z_D",
                  "gap_percent", "nodes", "ratio", "error"]
TIMING_COLUMNS = ["label", "n", "index", "formulation", "runtime"]
SUMMARY_COLUMNS = ["label", "n", "formulation", "mean_gap", "mean_runtime", "mean_ratio",
                   "instances"]
PLOT_COLUMNS = ["n", "formulation", "mean_gap", "mean_runtime"]


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".10g")
    return str(v)


def _write(path: Path, columns, rows) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([_cell(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def write_results(rows: list[ReportRow], out_dir, prefix: str = "gap") -> list[Path]:
    """Per-instance results, timings and per-cell summary as CSV files.

    Runtimes go to a separate file so the results file is reproducible
    bit-for-bit across runs.
    """
    out = Path(out_dir)
    recs = [r for row in rows for r in row.records]
    recs.sort(key=lambda r: (r.label, r.n, r.index, r.formulation))
    return [
        _write(out / f"{prefix}_results.csv", RESULT_COLUMNS,
               [[getattr(r, c) for c in RESULT_COLUMNS] for r in recs]),
        _write(out / f"{prefix}_timings.csv", TIMING_COLUMNS,
               [[r.label, r.n, r.index, r.formulation, r.runtime] for r in recs]),
        _write(out / f"{prefix}_summary.csv", SUMMARY_COLUMNS,
               [[row.label, row.n, row.formulation, row.mean_gap, row.mean_runtime,
                 row.mean_ratio, len(row.records)]
                for row in sorted(rows, key=lambda r: (r.label, r.n, r.formulation))]),
    ]


def emit_plot_data(rows: list[ReportRow], out_dir) -> list[Path]:
    """One CSV per experiment label with columns ``n, formulation, mean_gap, mean_runtime``."""
    out = Path(out_dir)
    labels = sorted({row.label for row in rows})
    paths = []
    for label in labels:
        sel = sorted((r for r in rows if r.label == label), key=lambda r: (r.n, r.formulation))
        paths.append(_write(out / f"plot_{label}.csv", PLOT_COLUMNS,
                            [[r.n, r.formulation, r.mean_gap, r.mean_runtime] for r in sel]))
    return paths


def ratio_table(rows: list[ReportRow], formulation: str = "relaxed-gcs") -> dict:
    """``{label: {n: mean_ratio}}`` for one relaxed formulation."""
    table: dict = {}
    for r in rows:
        if r.formulation == formulation:
            table.setdefault(r.label, {})[r.n] = r.mean_ratio
    return table


def run_bench(config: ExperimentConfig, out_dir, relaxation: bool = True,
              progress: TextIO | None = None, threads: int = 1) -> dict[str, list[ReportRow]]:
    os.makedirs(out_dir, exist_ok=True)
    # the config next to the results makes the run reproducible from the folder alone
    Path(out_dir, "config.txt").write_text(serialize_config(config))
    gap_rows = run_gap_study(config, progress, threads)
    write_results(gap_rows, out_dir, "gap")
    emit_plot_data(gap_rows, out_dir)
    out = {"gap": gap_rows}
    if relaxation:
        rel_rows = run_relaxation_study(config, gap_rows, progress=progress)
        write_results(rel_rows, out_dir, "relaxation")
        out["relaxation"] = rel_rows
    return out
