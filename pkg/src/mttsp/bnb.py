"""Branch-and-bound over the binary edge variables of either formulation.

Nodes are solved as continuous cone programs with fixed binaries substituted
out.  Search is best-bound with depth-first plunging after each branching.
Fixings are closed under the degree structure of the routing graph before a
node is solved: a chosen edge excludes its siblings, a node with one
remaining edge must use it, and edges that would close a cycle among chosen
edges are excluded.
"""

from __future__ import annotations

import heapq
import io
import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, TextIO

import numpy as np

from . import oracle
from .conic import OPTIMAL, INFEASIBLE, SolveResult, solve
from .formulations import (
    INTEGRALITY_TOL,
    MixedBinaryConicProgram,
    TourStructureError,
    VariableLayout,
    edges_to_sequence,
    recover_tour,
)
from .graph import Graph, build
from .instance import Instance
from .tour import Tour

STATUS_OPTIMAL = "optimal"
STATUS_FEASIBLE = "feasible"
STATUS_INFEASIBLE = "infeasible"
STATUS_NO_INCUMBENT = "no_incumbent"

DEFAULT_REL_TOL = 1e-6
DEFAULT_ABS_TOL = 1e-9
POLISH_TOL = 1e-10

LOG_HEADER = "nodes,z_P,z_D,gap_percent,elapsed"


def gap_percent(z_p: float | None, z_d: float | None) -> float:
    """``|z_P - z_D| / |z_P| * 100``; infinite without an incumbent or bound."""
    if z_p is None or z_d is None or not math.isfinite(z_p) or not math.isfinite(z_d):
        return math.inf
    if z_p == 0.0:
        return 0.0 if z_d == 0.0 else math.inf
    return abs(z_p - z_d) / abs(z_p) * 100.0


@dataclass
class MipResult:
    status: str
    incumbent: Tour | None
    z_P: float | None
    z_D: float | None
    gap_percent: float
    nodes_explored: int
    runtime: float
    primal: np.ndarray | None = None
    cuts: list = field(default_factory=list)


@dataclass(frozen=True)
class BnbNode:
    fixed_zero: frozenset
    fixed_one: frozenset
    bound: float
    depth: int = 0

    def __post_init__(self):
        if self.fixed_zero & self.fixed_one:
            raise ValueError("an edge cannot be fixed to both 0 and 1")


def branch_select(relaxation_primal, layout: VariableLayout, tol: float = INTEGRALITY_TOL) -> int:
    """Edge whose ``y`` is closest to 0.5; ties go to the smallest edge id."""
    y = layout.edge_values(np.asarray(relaxation_primal, dtype=float), "y")
    frac = np.abs(y - np.round(y))
    if frac.max(initial=0.0) <= tol:
        raise ValueError("branch_select needs a fractional y")
    score = np.abs(y - 0.5)
    return int(np.argmin(score))


def flow_sequence(graph: Graph, y, skip=frozenset()) -> tuple[int, ...]:
    """Targets in the order met by following the heaviest flow out of ``s``."""
    y = np.asarray(y, dtype=float)
    node, seq, seen = graph.source, [], set()
    while len(seq) < graph.n:
        options = [e for e in graph.e_out(node)
                   if graph.edges[e][1] in graph.targets and graph.edges[e][1] not in seen
                   and e not in skip]
        if not options:
            options = [e for e in graph.e_out(node)
                       if graph.edges[e][1] in graph.targets and graph.edges[e][1] not in seen]
        e = max(options, key=lambda k: (y[k], -k))
        node = graph.edges[e][1]
        seq.append(node)
        seen.add(node)
    return tuple(seq)


def incumbent_heuristic(instance: Instance, relaxation_primal, layout: VariableLayout,
                        graph: Graph | None = None, backend: str = "ipm") -> Tour | None:
    """Follow the largest flow from ``s`` and time the resulting order optimally.

    ``None`` when the order cannot meet every window.
    """
    graph = graph or build(instance)
    y = layout.edge_values(np.asarray(relaxation_primal, dtype=float), "y")
    seq = flow_sequence(graph, y)
    if oracle.quickest_tour(instance, seq) is None:
        return None
    return oracle.fixed_sequence_optimum(instance, seq, backend=backend, tol=1e-9)


def _cycles(graph: Graph, chosen) -> list[frozenset]:
    succ = {}
    for e in chosen:
        succ.setdefault(graph.edges[e][0], []).append(e)
    cycles, done = [], set()
    for start in list(succ):
        path, pos, node = [], {}, start
        while node in succ and node not in done and node not in pos:
            pos[node] = len(path)
            e = succ[node][0]
            path.append(e)
            node = graph.edges[e][1]
        if node in pos:
            cycles.append(frozenset(path[pos[node]:]))
        done.update(pos)
    return cycles


def propagate(graph: Graph, fixed_zero, fixed_one, cuts=()) -> tuple[frozenset, frozenset] | None:
    """Close the fixings under degree, path and cut implications; ``None`` if infeasible."""
    zero, one = set(fixed_zero), set(fixed_one)
    if zero & one:
        return None
    n_edges = len(graph.edges)
    changed = True
    while changed:
        changed = False
        for v in graph.nodes:
            for group in ((graph.e_out(v),) if v != graph.sink else ()) + \
                         ((graph.e_in(v),) if v != graph.source else ()):
                chosen = [e for e in group if e in one]
                if len(chosen) > 1:
                    return None
                if chosen:
                    for e in group:
                        if e not in one and e not in zero:
                            zero.add(e)
                            changed = True
                    continue
                open_ = [e for e in group if e not in zero]
                if not open_:
                    return None
                if len(open_) == 1:
                    one.add(open_[0])
                    changed = True
        tails = [graph.edges[e][0] for e in one]
        heads_ = [graph.edges[e][1] for e in one]
        # edges added during the sweep may clash before their groups are revisited
        if len(set(tails)) < len(tails) or len(set(heads_)) < len(heads_):
            return None
        if _cycles(graph, one):
            return None
        # chains of chosen edges: forbid the edge that would close one early
        succ = {graph.edges[e][0]: graph.edges[e][1] for e in one}
        heads = set(succ.values())
        for a in succ:
            if a in heads:
                continue
            b, length = a, 0
            while b in succ:
                b = succ[b]
                length += 1
            if a == graph.source and b == graph.sink:
                if length != graph.n + 1:
                    return None
                continue
            if a == graph.source:
                closing = (b, graph.sink) if length < graph.n else None
            elif b == graph.sink:
                closing = (graph.source, a) if length < graph.n else None
            else:
                closing = (b, a)
            if closing is None:
                continue
            try:
                e = graph.edge_id(*closing)
            except KeyError:
                continue
            if e in one:
                return None
            if e not in zero:
                zero.add(e)
                changed = True
        for cut in cuts:
            hit = len(cut & one)
            if hit >= len(cut):
                return None
            if hit == len(cut) - 1:
                for e in cut - one:
                    if e not in zero:
                        zero.add(e)
                        changed = True
        if len(zero) + len(one) > n_edges:
            return None
    return frozenset(zero), frozenset(one)


class _Search:
    def __init__(self, mbp, time_limit, abs_tol, rel_tol, backend, tol, log, log_every,
                 threads, heuristic):
        self.mbp = mbp
        self.graph = mbp.graph
        self.instance = mbp.instance
        self.start = time.perf_counter()
        self.deadline = self.start + time_limit if time_limit is not None else math.inf
        self.abs_tol = abs_tol
        self.rel_tol = rel_tol
        self.backend = backend
        self.tol = tol
        self.log = log
        self.log_every = log_every
        self.threads = threads
        self.heuristic = heuristic
        self.cuts: list[frozenset] = []
        self.z_p = math.inf
        self.best_seq: tuple[int, ...] | None = None
        self.best_tour: Tour | None = None
        self.tried: set = set()
        self.heap: list = []
        self.counter = itertools.count()
        self.nodes = 0
        self.pruned_floor = math.inf
        self.last_bound = -math.inf
        self.timed_out = False

    # -- bookkeeping ------------------------------------------------------
    def elapsed(self) -> float:
        return time.perf_counter() - self.start

    def remaining(self) -> float | None:
        if not math.isfinite(self.deadline):
            return None
        return max(self.deadline - time.perf_counter(), 1e-3)

    def cutoff(self) -> float:
        if not math.isfinite(self.z_p):
            return math.inf
        return self.z_p - max(self.abs_tol, self.rel_tol * abs(self.z_p))

    def bound(self, current: BnbNode | None = None) -> float:
        cands = [self.z_p, self.pruned_floor]
        if self.heap:
            cands.append(self.heap[0][0])
        if current is not None:
            cands.append(current.bound)
        z_d = min(cands)
        # relaxations are solved to tolerance; keep the reported bound monotone
        self.last_bound = max(self.last_bound, z_d) if math.isfinite(z_d) else self.last_bound
        return self.last_bound

    def emit(self, current=None, force=False):
        if self.log is None or (not force and self.nodes % self.log_every):
            return
        z_d = self.bound(current)
        zp = self.z_p if math.isfinite(self.z_p) else float("nan")
        self.log.write(f"{self.nodes},{zp:.10g},{z_d:.10g},{gap_percent(self.z_p, z_d):.6g},"
                       f"{self.elapsed():.3f}\n")

    def push(self, node: BnbNode):
        heapq.heappush(self.heap, (node.bound, next(self.counter), node))

    def prune_by_bound(self, node_bound):
        self.pruned_floor = min(self.pruned_floor, node_bound)

    def offer(self, tour: Tour | None):
        if tour is None:
            return
        if oracle.check_feasible(self.instance, tour):
            return
        if tour.cost < self.z_p:
            self.z_p = tour.cost
            self.best_seq = tour.targets
            self.best_tour = tour

    def try_sequence(self, seq, primal=None):
        if seq in self.tried:
            return
        self.tried.add(seq)
        if oracle.quickest_tour(self.instance, seq) is None:
            return
        self.offer(oracle.fixed_sequence_optimum(self.instance, seq, backend=self.backend,
                                                 tol=1e-9))

    # -- node processing --------------------------------------------------
    def solve_node(self, node: BnbNode):
        closed = propagate(self.graph, node.fixed_zero, node.fixed_one, self.cuts)
        if closed is None:
            return node, None, None
        zero, one = closed
        restr = self.mbp.restrict(zero, one, self.cuts)
        if restr is None:
            return node, closed, None
        res = solve(restr.program, tol=self.tol, backend=self.backend,
                    time_budget=self.remaining())
        return node, closed, (restr, res)

    def handle(self, node: BnbNode, closed, outcome) -> list[BnbNode]:
        """Consume a solved node; returns children, preferred child first."""
        self.nodes += 1
        if closed is None or outcome is None:
            return []
        zero, one = closed
        restr, res = outcome
        if res.status == INFEASIBLE:
            return []
        if res.status == OPTIMAL:
            value = max(res.objective_value, node.bound)
        else:
            value = node.bound
        if value >= self.cutoff():
            self.prune_by_bound(value)
            return []
        x = restr.expand(res.primal) if res.primal is not None else None
        if x is None:
            free = [e for e in range(len(self.graph.edges)) if e not in zero and e not in one]
            if not free:
                return []
            return self.children(node, zero, one, free[0], value, prefer_one=True)
        y = x[self.mbp.binaries]
        frac = np.abs(y - np.round(y))
        if res.status == OPTIMAL and frac.max(initial=0.0) <= INTEGRALITY_TOL:
            chosen = [e for e in range(len(y)) if y[e] > 0.5]
            try:
                seq = edges_to_sequence(self.graph, chosen)
            except TourStructureError:
                new = [c for c in _cycles(self.graph, chosen) if c not in self.cuts]
                if not new:
                    return []
                self.cuts.extend(new)
                return [BnbNode(zero, one, value, node.depth)]
            tour = recover_tour(self.instance, self.graph, self.mbp.layout, x)
            self.tried.add(tour.targets)
            self.offer(tour)
            if tour.targets != self.best_seq:
                self.try_sequence(seq[1:-1])
            return []
        if self.heuristic:
            self.try_sequence(flow_sequence(self.graph, y))
        if value >= self.cutoff():
            self.prune_by_bound(value)
            return []
        free_frac = [e for e in range(len(y)) if frac[e] > INTEGRALITY_TOL
                     and e not in zero and e not in one]
        if free_frac:
            score = np.abs(y[free_frac] - 0.5)
            e = free_frac[int(np.argmin(score))]
        else:
            free = [k for k in range(len(y)) if k not in zero and k not in one]
            if not free:
                return []
            e = free[0]
        return self.children(node, zero, one, e, value, prefer_one=y[e] >= 0.5)

    def children(self, node, zero, one, e, value, prefer_one):
        up = BnbNode(zero, one | {e}, value, node.depth + 1)
        down = BnbNode(zero | {e}, one, value, node.depth + 1)
        return [up, down] if prefer_one else [down, up]

    def run(self) -> None:
        root = BnbNode(frozenset(), frozenset(), -math.inf)
        if self.threads > 1:
            self._run_parallel(root)
            return
        current: BnbNode | None = root
        while True:
            if current is None:
                if not self.heap:
                    break
                current = heapq.heappop(self.heap)[2]
            if time.perf_counter() > self.deadline:
                self.push(current)
                self.timed_out = True
                break
            if current.bound >= self.cutoff():
                self.prune_by_bound(current.bound)
                current = None
                continue
            kids = self.handle(current, *self.solve_node(current)[1:])
            self.emit(current)
            current = None
            if kids:
                current = kids[0]
                for k in kids[1:]:
                    self.push(k)

    def _run_parallel(self, root):
        self.push(root)
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            while self.heap:
                if time.perf_counter() > self.deadline:
                    self.timed_out = True
                    break
                batch = []
                while self.heap and len(batch) < self.threads:
                    node = heapq.heappop(self.heap)[2]
                    if node.bound >= self.cutoff():
                        self.prune_by_bound(node.bound)
                        continue
                    batch.append(node)
                # results are consumed in submission order, so runs are repeatable
                for node, closed, outcome in pool.map(self.solve_node, batch):
                    for kid in self.handle(node, closed, outcome):
                        self.push(kid)
                    self.emit()


def _polish(mbp: MixedBinaryConicProgram, tour: Tour, backend: str):
    graph = mbp.graph
    one = {graph.edge_id(i, j) for i, j in tour.edges}
    zero = set(range(len(graph.edges))) - one
    restr = mbp.restrict(zero, one)
    if restr is None:
        return None
    for tol in (POLISH_TOL, 1e-8):
        res = solve(restr.program, tol=tol, backend=backend)
        if res.status == OPTIMAL:
            return restr.expand(res.primal), res
    return None


def solve_mip(program: MixedBinaryConicProgram, time_limit: float | None = 120.0,
              abs_tol: float = DEFAULT_ABS_TOL, rel_tol: float = DEFAULT_REL_TOL,
              backend: str = "ipm", tol: float = 1e-8, log: TextIO | None = None,
              log_every: int = 1, threads: int = 1, heuristic: bool = True) -> MipResult:
    """Solve ``program`` to optimality or until ``time_limit`` seconds.

    ``threads > 1`` evaluates batches of open nodes concurrently; results are
    consumed in a fixed order so the outcome does not depend on scheduling.
    Progress goes to ``log`` as CSV (see ``LOG_HEADER``).
    """
    if log is not None:
        log.write(LOG_HEADER + "\n")
    search = _Search(program, time_limit, abs_tol, rel_tol, backend, tol, log, max(1, log_every),
                     threads, heuristic)
    search.run()
    search.emit(force=True)
    runtime = search.elapsed()
    if search.best_tour is None:
        status = STATUS_NO_INCUMBENT if search.timed_out else STATUS_INFEASIBLE
        z_d = search.bound() if search.timed_out else None
        return MipResult(status, None, None, z_d, math.inf, search.nodes, runtime,
                         cuts=search.cuts)
    z_p = search.z_p
    tour = search.best_tour
    primal = None
    polished = _polish(program, tour, backend)
    if polished is not None:
        x, res = polished
        try:
            cand = recover_tour(program.instance, program.graph, program.layout, x)
        except TourStructureError:
            cand = None
        if cand is not None and not oracle.check_feasible(program.instance, cand):
            tour, primal = cand, x
            z_p = res.objective_value
    z_d = min(search.bound(), z_p)
    status = STATUS_FEASIBLE if search.timed_out else STATUS_OPTIMAL
    if status == STATUS_OPTIMAL:
        z_d = min(z_p, search.pruned_floor)
        z_d = max(z_d, min(search.last_bound, z_p))
    return MipResult(status, tour, z_p, z_d, gap_percent(z_p, z_d), search.nodes, runtime,
                     primal=primal, cuts=search.cuts)


def solve_instance(instance: Instance, formulation: str = "gcs", **kwargs) -> MipResult:
    from .formulations import build_bigm, build_gcs

    graph = build(instance)
    builder = {"gcs": build_gcs, "bigm": build_bigm}[formulation]
    return solve_mip(builder(instance, graph), **kwargs)


def read_log(text: str) -> list[dict]:
    """Parse a progress log written by :func:`solve_mip`."""
    import csv

    return [
        {k: (int(v) if k == "nodes" else float(v)) for k, v in row.items()}
        for row in csv.DictReader(io.StringIO(text))
    ]


__all__ = [
    "MipResult", "BnbNode", "solve_mip", "solve_instance", "branch_select", "incumbent_heuristic",
    "flow_sequence", "propagate", "gap_percent", "read_log", "LOG_HEADER",
]
