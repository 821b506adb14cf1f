"""Mixed-binary cone programs for the moving-target TSP.

Two formulations over the same graph:

* ``build_bigm`` -- node times ``t_i`` with big-M speed and length coupling
  per edge (time big-M ``T``, distance big-M ``R``).
* ``build_gcs`` -- graph-of-convex-sets program: each edge carries copies
  ``z_e``, ``z'_e`` of its endpoints' space-time points, constrained to the
  perspective of the endpoint segments so that ``y_e = 0`` pins them to zero.

Both compile to :class:`~mttsp.conic.ConicProgram` in equality standard form.
Two-sided inequalities get nonnegative slacks; a window with ``t_lo == t_hi``
(the start depot) becomes a single equality.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from . import conic
from .conic import FREE, NONNEG, SOC, Cone, ConicProgram, ProgramBuilder
from .graph import Graph, node_set
from .instance import Instance
from .tour import Tour

INTEGRALITY_TOL = 1e-6

BIGM_NODE_SYMBOLS = ("t", "p_x", "p_y")
BIGM_EDGE_SYMBOLS = ("y", "l_tilde", "l_x", "l_y", "l_bar")
GCS_EDGE_SYMBOLS = ("y", "l", "l_x", "l_y", "z_x", "z_y", "z_t", "zp_x", "zp_y", "zp_t")


class TourStructureError(ValueError):
    """Selected edges do not form a single s -> s' path through every target."""


@dataclass
class VariableLayout:
    """Column index of every formulation symbol, per node and per edge.

    ``aux`` holds compilation-only columns (complement of ``y``, window and
    speed slacks) so that the symbol slots stay one-to-one with the model.
    """

    kind: str
    node_cols: dict[int, dict[str, int]] = field(default_factory=dict)
    edge_cols: dict[int, dict[str, int]] = field(default_factory=dict)
    aux: dict[int, dict[str, int]] = field(default_factory=dict)

    @property
    def y_cols(self) -> np.ndarray:
        return np.array([self.edge_cols[e]["y"] for e in sorted(self.edge_cols)], dtype=int)

    def edge_values(self, x, name: str) -> np.ndarray:
        return np.array([x[self.edge_cols[e][name]] for e in sorted(self.edge_cols)])

    def audit(self, n_cols: int | None = None) -> None:
        """Check every symbol has exactly one slot and no column is shared."""
        node_syms = BIGM_NODE_SYMBOLS if self.kind == "bigm" else ()
        edge_syms = BIGM_EDGE_SYMBOLS if self.kind == "bigm" else GCS_EDGE_SYMBOLS
        seen: dict[int, str] = {}

        def claim(col, label):
            if col in seen:
                raise AssertionError(f"column {col} shared by {seen[col]} and {label}")
            seen[col] = label

        for v, cols in self.node_cols.items():
            if set(cols) != set(node_syms):
                raise AssertionError(f"node {v} symbols {sorted(cols)} != {sorted(node_syms)}")
            for name, col in cols.items():
                claim(col, f"{name}[{v}]")
        if node_syms and not self.node_cols:
            raise AssertionError("missing node symbols")
        for e, cols in self.edge_cols.items():
            if set(cols) != set(edge_syms):
                raise AssertionError(f"edge {e} symbols {sorted(cols)} != {sorted(edge_syms)}")
            for name, col in cols.items():
                claim(col, f"{name}[{e}]")
        for e, cols in self.aux.items():
            for name, col in cols.items():
                claim(col, f"aux {name}[{e}]")
        if n_cols is not None and len(seen) != n_cols:
            raise AssertionError(f"{n_cols - len(seen)} columns have no layout slot")


@dataclass
class Restriction:
    """A base program with some binaries fixed, as a smaller cone program."""

    program: ConicProgram
    keep: np.ndarray
    values: np.ndarray

    def expand(self, x_red) -> np.ndarray:
        x = self.values.copy()
        x[self.keep] = np.asarray(x_red)[: self.keep.size]
        return x


@dataclass
class MixedBinaryConicProgram:
    """Cone program with binary ``y_e`` columns (bounded to [0, 1] in ``base``).

    ``vanish[e]`` lists the columns forced to zero when ``y_e = 0`` and
    ``complement[e]`` the slack column holding ``1 - y_e``.
    """

    base: ConicProgram
    binaries: np.ndarray
    layout: VariableLayout
    instance: Instance
    graph: Graph
    vanish: list[np.ndarray]
    complement: np.ndarray

    @property
    def kind(self) -> str:
        return self.layout.kind

    def restrict(self, fixed_zero: Iterable[int] = (), fixed_one: Iterable[int] = (),
                 cuts: Iterable[frozenset] = ()) -> Restriction | None:
        """Substitute fixed binaries; ``None`` if an equality becomes ``0 = b != 0``.

        Each cut is an edge set of which at most ``len(cut) - 1`` may be chosen.
        """
        base = self.base
        n = base.n
        values = np.zeros(n)
        fixed = np.zeros(n, dtype=bool)
        fixed_one = list(fixed_one)
        for e in fixed_zero:
            fixed[self.binaries[e]] = True
            fixed[self.vanish[e]] = True
        for e in fixed_one:
            values[self.binaries[e]] = 1.0
            fixed[self.binaries[e]] = True
            fixed[self.complement[e]] = True
        keep = np.flatnonzero(~fixed)
        A = base.A
        b = base.b - A @ values
        offset = base.offset + float(base.c @ values)
        A_keep = A[:, keep].tocsr()
        nnz_rows = np.diff(A_keep.indptr) > 0
        scale = 1.0 + np.abs(base.b).max(initial=0.0)
        if np.any(np.abs(b[~nnz_rows]) > 1e-9 * scale):
            return None
        rows = np.flatnonzero(nnz_rows)
        A_keep = A_keep[rows]
        b = b[rows]
        cones = []
        for cone, sl in base.blocks():
            kept = int((~fixed[sl]).sum())
            if kept == 0:
                continue
            if cone.kind == SOC and kept != cone.dim:
                raise ValueError("a second-order cone block was partially fixed")
            cones.extend([cone] if cone.kind == SOC else [Cone(cone.kind, kept)])
        var_names = tuple(base.var_names[j] for j in keep) if base.var_names else None
        row_names = tuple(base.row_names[i] for i in rows) if base.row_names else None

        one = set(fixed_one)
        extra_rows, extra_b, extra_names = [], [], []
        col_of = {int(j): k for k, j in enumerate(keep)}
        for cut in cuts:
            rhs = len(cut) - 1 - sum(1 for e in cut if e in one)
            free_edges = [e for e in sorted(cut) if int(self.binaries[e]) in col_of]
            if rhs < 0:
                return None
            if not free_edges:
                continue
            extra_rows.append([col_of[int(self.binaries[e])] for e in free_edges])
            extra_b.append(float(rhs))
            extra_names.append("cut[" + ",".join(str(e) for e in free_edges) + "]")
        if extra_rows:
            k = len(extra_rows)
            r_idx = [i for i, cols in enumerate(extra_rows) for _ in cols]
            c_idx = [c for cols in extra_rows for c in cols]
            top = sp.hstack([A_keep, sp.csr_matrix((A_keep.shape[0], k))])
            bottom = sp.hstack([sp.csr_matrix((np.ones(len(c_idx)), (r_idx, c_idx)),
                                              shape=(k, keep.size)), sp.identity(k)])
            A_keep = sp.vstack([top, bottom]).tocsr()
            b = np.concatenate([b, extra_b])
            cones.append(Cone(NONNEG, k))
            if var_names is not None:
                var_names = var_names + tuple(f"cut_slack[{i}]" for i in range(k))
            if row_names is not None:
                row_names = row_names + tuple(extra_names)
        c = base.c[keep]
        if extra_rows:
            c = np.concatenate([c, np.zeros(len(extra_rows))])
        program = ConicProgram(c=c, A=A_keep, b=b, cones=conic.merge_cones(cones),
                               offset=offset, var_names=var_names, row_names=row_names)
        return Restriction(program, keep, values)


def _edge_label(graph: Graph, e: int) -> str:
    i, j = graph.edges[e]
    return f"{graph.node_label(i)}->{graph.node_label(j)}"


def _anchor(seg) -> tuple[float, float]:
    """Intercept of the node's trajectory at time 0: ``p_lo - t_lo * v``."""
    ref = seg.ref_pos
    return float(ref[0]), float(ref[1])


def _degree_rows(bld: ProgramBuilder, graph: Graph, ycol: dict[int, int]) -> None:
    src, snk = graph.source, graph.sink
    bld.row({ycol[e]: 1.0 for e in graph.e_out(src)}, 1.0, "flow_out[s]")
    bld.row({ycol[e]: 1.0 for e in graph.e_in(snk)}, 1.0, "flow_in[s']")
    for i in graph.targets:
        bld.row({ycol[e]: 1.0 for e in graph.e_in(i)}, 1.0, f"visit[{i}]")


def _binary(bld, label, aux):
    y = bld.var(NONNEG, f"y[{label}]")
    u = bld.var(NONNEG, f"y_compl[{label}]")
    bld.row({y: 1.0, u: 1.0}, 1.0, f"y_bound[{label}]")
    aux["y_compl"] = u
    return y, u


def build_bigm(instance: Instance, graph: Graph) -> MixedBinaryConicProgram:
    """Big-M mixed-integer SOCP: node times, edge lengths gated by ``T`` and ``R``."""
    bld = ProgramBuilder()
    layout = VariableLayout("bigm")
    T, R, vmax = float(instance.T), float(instance.R), float(instance.v_max)
    segs = {v: node_set(instance, v) for v in graph.nodes}
    for v in graph.nodes:
        lbl = graph.node_label(v)
        t, px, py = bld.add(FREE, [f"t[{lbl}]", f"p_x[{lbl}]", f"p_y[{lbl}]"])
        layout.node_cols[v] = {"t": t, "p_x": px, "p_y": py}
        seg = segs[v]
        aux = layout.aux.setdefault(-1 - v, {})
        if seg.t_lo == seg.t_hi:
            bld.row({t: 1.0}, seg.t_lo, f"window[{lbl}]")
        else:
            a_lo = bld.var(NONNEG, f"t_lo_slack[{lbl}]")
            a_hi = bld.var(NONNEG, f"t_hi_slack[{lbl}]")
            aux.update(t_lo_slack=a_lo, t_hi_slack=a_hi)
            bld.row({t: 1.0, a_lo: -1.0}, seg.t_lo, f"window_lo[{lbl}]")
            bld.row({t: 1.0, a_hi: 1.0}, seg.t_hi, f"window_hi[{lbl}]")
        ax, ay = _anchor(seg)
        vx, vy = seg.velocity
        bld.row({px: 1.0, t: -vx}, ax, f"pos_x[{lbl}]")
        bld.row({py: 1.0, t: -vy}, ay, f"pos_y[{lbl}]")

    ycol = {}
    complement = np.zeros(len(graph.edges), dtype=int)
    for e, (i, j) in enumerate(graph.edges):
        lbl = _edge_label(graph, e)
        aux = layout.aux.setdefault(e, {})
        y, u = _binary(bld, lbl, aux)
        ycol[e] = y
        complement[e] = u
        lt = bld.var(NONNEG, f"l_tilde[{lbl}]")
        lbar, lx, ly = bld.add(SOC, [f"l_bar[{lbl}]", f"l_x[{lbl}]", f"l_y[{lbl}]"])
        w = bld.var(NONNEG, f"speed_slack[{lbl}]")
        aux["speed_slack"] = w
        layout.edge_cols[e] = {"y": y, "l_tilde": lt, "l_x": lx, "l_y": ly, "l_bar": lbar}
        ti, tj = layout.node_cols[i]["t"], layout.node_cols[j]["t"]
        (aix, aiy), (ajx, ajy) = _anchor(segs[i]), _anchor(segs[j])
        (vix, viy), (vjx, vjy) = segs[i].velocity, segs[j].velocity
        bld.row({lx: 1.0, tj: -vjx, ti: vix}, ajx - aix, f"def_l_x[{lbl}]")
        bld.row({ly: 1.0, tj: -vjy, ti: viy}, ajy - aiy, f"def_l_y[{lbl}]")
        # l_tilde <= vmax (t_j - t_i + T (1 - y))
        bld.row({tj: vmax, ti: -vmax, y: -vmax * T, lt: -1.0, w: -1.0}, -vmax * T,
                f"speed[{lbl}]")
        # l_bar = l_tilde + R (1 - y)
        bld.row({lbar: 1.0, lt: -1.0, y: R}, R, f"cone_gate[{lbl}]")
        bld.cost(lt, 1.0)

    _degree_rows(bld, graph, ycol)
    for i in graph.targets:
        coeffs = {ycol[e]: 1.0 for e in graph.e_in(i)}
        for e in graph.e_out(i):
            coeffs[ycol[e]] = coeffs.get(ycol[e], 0.0) - 1.0
        bld.row(coeffs, 0.0, f"conserve[{i}]")
    base = bld.build()
    layout.audit()
    binaries = np.array([ycol[e] for e in range(len(graph.edges))], dtype=int)
    vanish = [np.zeros(0, dtype=int) for _ in graph.edges]
    return MixedBinaryConicProgram(base, binaries, layout, instance, graph, vanish, complement)


def build_gcs(instance: Instance, graph: Graph) -> MixedBinaryConicProgram:
    """Graph-of-convex-sets mixed-integer SOCP (no big-M constants)."""
    bld = ProgramBuilder()
    layout = VariableLayout("gcs")
    vmax = float(instance.v_max)
    segs = {v: node_set(instance, v) for v in graph.nodes}
    ycol = {}
    complement = np.zeros(len(graph.edges), dtype=int)
    vanish = []
    for e, (i, j) in enumerate(graph.edges):
        lbl = _edge_label(graph, e)
        aux = layout.aux.setdefault(e, {})
        y, u = _binary(bld, lbl, aux)
        ycol[e] = y
        complement[e] = u
        zx, zy, zt = bld.add(FREE, [f"z_x[{lbl}]", f"z_y[{lbl}]", f"z_t[{lbl}]"])
        qx, qy, qt = bld.add(FREE, [f"zp_x[{lbl}]", f"zp_y[{lbl}]", f"zp_t[{lbl}]"])
        l, lx, ly = bld.add(SOC, [f"l[{lbl}]", f"l_x[{lbl}]", f"l_y[{lbl}]"])
        group = [zx, zy, zt, qx, qy, qt, l, lx, ly]
        for end, (px, py, pt), seg in (("z", (zx, zy, zt), segs[i]), ("zp", (qx, qy, qt), segs[j])):
            # perspective of the segment: y t_lo <= z_t <= y t_hi and z_p = v z_t + y (p_lo - t_lo v)
            if seg.t_lo == seg.t_hi:
                bld.row({pt: 1.0, y: -seg.t_lo}, 0.0, f"{end}_window[{lbl}]")
            else:
                a_lo = bld.var(NONNEG, f"{end}_lo_slack[{lbl}]")
                a_hi = bld.var(NONNEG, f"{end}_hi_slack[{lbl}]")
                aux[f"{end}_lo_slack"] = a_lo
                aux[f"{end}_hi_slack"] = a_hi
                group += [a_lo, a_hi]
                bld.row({pt: 1.0, y: -seg.t_lo, a_lo: -1.0}, 0.0, f"{end}_window_lo[{lbl}]")
                bld.row({pt: 1.0, y: -seg.t_hi, a_hi: 1.0}, 0.0, f"{end}_window_hi[{lbl}]")
            ax, ay = _anchor(seg)
            vx, vy = seg.velocity
            bld.row({px: 1.0, pt: -vx, y: -ax}, 0.0, f"{end}_traj_x[{lbl}]")
            bld.row({py: 1.0, pt: -vy, y: -ay}, 0.0, f"{end}_traj_y[{lbl}]")
        bld.row({lx: 1.0, qx: -1.0, zx: 1.0}, 0.0, f"def_l_x[{lbl}]")
        bld.row({ly: 1.0, qy: -1.0, zy: 1.0}, 0.0, f"def_l_y[{lbl}]")
        w = bld.var(NONNEG, f"speed_slack[{lbl}]")
        aux["speed_slack"] = w
        group.append(w)
        # l <= vmax (z'_t - z_t)
        bld.row({qt: vmax, zt: -vmax, l: -1.0, w: -1.0}, 0.0, f"speed[{lbl}]")
        bld.cost(l, 1.0)
        layout.edge_cols[e] = {"y": y, "l": l, "l_x": lx, "l_y": ly, "z_x": zx, "z_y": zy,
                               "z_t": zt, "zp_x": qx, "zp_y": qy, "zp_t": qt}
        vanish.append(np.array(group, dtype=int))

    _degree_rows(bld, graph, ycol)
    for i in graph.targets:
        flow = {ycol[e]: 1.0 for e in graph.e_in(i)}
        time_ = {layout.edge_cols[e]["zp_t"]: 1.0 for e in graph.e_in(i)}
        for e in graph.e_out(i):
            flow[ycol[e]] = flow.get(ycol[e], 0.0) - 1.0
            time_[layout.edge_cols[e]["z_t"]] = -1.0
        bld.row(flow, 0.0, f"conserve[{i}]")
        bld.row(time_, 0.0, f"conserve_time[{i}]")
    base = bld.build()
    layout.audit()
    binaries = np.array([ycol[e] for e in range(len(graph.edges))], dtype=int)
    return MixedBinaryConicProgram(base, binaries, layout, instance, graph, vanish, complement)


def relax(program):
    """Continuous relaxation: binaries range over [0, 1]; nothing else changes."""
    if isinstance(program, ConicProgram):
        return program
    return program.base


def integral_edges(graph: Graph, y, tol: float = INTEGRALITY_TOL) -> list[int]:
    y = np.asarray(y, dtype=float)
    off = np.abs(y - np.round(y))
    if np.any(off > tol):
        worst = int(np.argmax(off))
        raise TourStructureError(
            f"edge {_edge_label(graph, worst)} has fractional flow {y[worst]:.6g}")
    return [e for e in range(len(graph.edges)) if y[e] > 0.5]


def edges_to_sequence(graph: Graph, chosen: Iterable[int]) -> tuple[int, ...]:
    """Walk the chosen edges from ``s``; raises unless they form one Hamiltonian path."""
    chosen = list(chosen)
    succ: dict[int, int] = {}
    for e in chosen:
        i, j = graph.edges[e]
        if i in succ:
            raise TourStructureError(f"node {graph.node_label(i)} has two outgoing edges")
        succ[i] = j
    seq = [graph.source]
    seen = {graph.source}
    while seq[-1] in succ:
        nxt = succ[seq[-1]]
        if nxt in seen:
            raise TourStructureError("chosen edges contain a cycle")
        seq.append(nxt)
        seen.add(nxt)
    if seq[-1] != graph.sink or len(seq) != graph.n + 2 or len(chosen) != graph.n + 1:
        raise TourStructureError(
            "chosen edges do not form a single path from s through every target to s'")
    return tuple(seq)


def recover_tour(instance: Instance, graph: Graph, layout: VariableLayout, primal) -> Tour:
    """Tour read off a binary-feasible solution of either formulation.

    For the GCS program the visit point of node ``i`` is the sum of ``z'_e``
    over incoming edges (``z_e`` over outgoing edges for ``s``).
    """
    x = np.asarray(primal, dtype=float)
    y = layout.edge_values(x, "y")
    seq = edges_to_sequence(graph, integral_edges(graph, y))
    times, positions = [], []
    for v in seq:
        if layout.kind == "bigm":
            cols = layout.node_cols[v]
            times.append(x[cols["t"]])
            positions.append((x[cols["p_x"]], x[cols["p_y"]]))
            continue
        if v == graph.source:
            es, names = graph.e_out(v), ("z_x", "z_y", "z_t")
        else:
            es, names = graph.e_in(v), ("zp_x", "zp_y", "zp_t")
        px, py, pt = (sum(x[layout.edge_cols[e][nm]] for e in es) for nm in names)
        times.append(pt)
        positions.append((px, py))
    return Tour.from_points(seq, times, positions)


def biconvex_violations(instance: Instance, graph: Graph, y, p, t, tol: float = 1e-6) -> list[str]:
    """Pointwise check of a candidate ``(y, p, t)`` against the bilinear program.

    ``y`` is indexed by edge id; ``p`` and ``t`` by node.  The edge copies are
    taken as ``z_e = y_e (p_i, t_i)``, ``z'_e = y_e (p_j, t_j)`` and the edge
    length as ``y_e ||p_j - p_i||``.  Returns human-readable violations.
    """
    y = np.asarray(y, dtype=float)
    out = []

    def need(ok, msg):
        if not ok:
            out.append(msg)

    need(abs(sum(y[e] for e in graph.e_out(graph.source)) - 1) <= tol, "flow out of s != 1")
    need(abs(sum(y[e] for e in graph.e_in(graph.sink)) - 1) <= tol, "flow into s' != 1")
    for i in graph.targets:
        fin = sum(y[e] for e in graph.e_in(i))
        fout = sum(y[e] for e in graph.e_out(i))
        need(abs(fin - 1) <= tol, f"target {i} inflow {fin:.6g} != 1")
        need(abs(fin - fout) <= tol, f"target {i} flow not conserved")
    for e in range(len(graph.edges)):
        need(min(abs(y[e]), abs(y[e] - 1)) <= tol, f"edge {_edge_label(graph, e)} not binary")
    for v in graph.nodes:
        seg = node_set(instance, v)
        need(seg.t_lo - tol <= t[v] <= seg.t_hi + tol, f"node {graph.node_label(v)} outside window")
        need(seg.distance(p[v], t[v]) <= tol, f"node {graph.node_label(v)} off its trajectory")
    for e, (i, j) in enumerate(graph.edges):
        z = y[e] * np.r_[p[i], t[i]]
        zp = y[e] * np.r_[p[j], t[j]]
        length = float(np.linalg.norm(zp[:2] - z[:2]))
        need(length <= instance.v_max * (zp[2] - z[2]) + tol,
             f"edge {_edge_label(graph, e)} exceeds the speed cap")
    return out


def dump_formulation(program: MixedBinaryConicProgram, fh) -> None:
    """Text dump with symbol names on rows and columns (see :func:`mttsp.conic.dump`)."""
    fh.write(f"# {program.kind} formulation, {len(program.graph.edges)} edges, "
             f"binaries: {' '.join(str(int(c)) for c in program.binaries)}\n")
    conic.dump(program.base, fh)
