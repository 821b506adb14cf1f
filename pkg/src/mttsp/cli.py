"""Command-line entry point: ``mttsp <command> ...``.

Exit codes: 0 success, 1 infeasible (or a tour that fails its check),
2 limit reached without an incumbent, 3 usage or input error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import bench, bnb, oracle
from .formulations import build_bigm, build_gcs, dump_formulation
from .graph import build
from .instance import InstanceError, WindowAssignmentError, load, save
from .tour import parse_tour, serialize_tour

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_NO_INCUMBENT = 2
EXIT_USAGE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _builder(name):
    return {"gcs": build_gcs, "bigm": build_bigm}[name]


def cmd_generate(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for k in range(args.count):
        seed = args.seed + k
        family = bench.make_instances(args.n, seed, args.durations, args.vmax)
        for d, inst in family.items():
            path = out / f"n{args.n}_s{seed}_tw{d:g}.txt"
            save(inst.with_vmax(args.vmax), path)
            print(path)
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = load(args.instance)
    mbp = _builder(args.formulation)(inst, build(inst))
    if args.dump:
        with open(args.dump, "w") as fh:
            dump_formulation(mbp, fh)
    log = open(args.log, "w") if args.log else None
    try:
        res = bnb.solve_mip(mbp, time_limit=args.time_limit, rel_tol=args.tol,
                            threads=1 if args.deterministic else args.threads, log=log)
    finally:
        if log is not None:
            log.close()
    print(f"status {res.status}")
    print(f"z_P {res.z_P}")
    print(f"z_D {res.z_D}")
    print(f"gap_percent {res.gap_percent:.6g}")
    print(f"nodes {res.nodes_explored}")
    print(f"runtime {res.runtime:.3f}")
    if res.incumbent is not None:
        print("sequence " + " ".join(str(v) for v in res.incumbent.sequence))
        if args.tour_out:
            Path(args.tour_out).write_text(serialize_tour(res.incumbent))
    if res.status == bnb.STATUS_INFEASIBLE:
        return EXIT_INFEASIBLE
    if res.status == bnb.STATUS_NO_INCUMBENT:
        return EXIT_NO_INCUMBENT
    return EXIT_OK


def cmd_relax(args) -> int:
    inst = load(args.instance)
    value, runtime, status = bench.relaxed_bound(inst, args.formulation)
    print(f"status {status}")
    print(f"bound {value}")
    print(f"runtime {runtime:.4f}")
    if status == "infeasible":
        return EXIT_INFEASIBLE
    return EXIT_OK if value is not None else EXIT_NO_INCUMBENT


def cmd_oracle(args) -> int:
    inst = load(args.instance)
    tour = oracle.brute_force(inst)
    if tour is None:
        print("status infeasible")
        return EXIT_INFEASIBLE
    print(f"cost {tour.cost:.12g}")
    print("sequence " + " ".join(str(v) for v in tour.sequence))
    if args.tour_out:
        Path(args.tour_out).write_text(serialize_tour(tour))
    return EXIT_OK


def cmd_check(args) -> int:
    inst = load(args.instance)
    tour = parse_tour(Path(args.tour).read_text())
    violations = oracle.check_feasible(inst, tour, tol=args.tol)
    for v in violations:
        print(f"{v.kind} {v.magnitude:.3g} {v.message}")
    if violations:
        return EXIT_INFEASIBLE
    print(f"feasible cost {tour.cost:.12g}")
    return EXIT_OK


def cmd_bench(args) -> int:
    config = bench.load_config(args.config)
    bench.run_bench(config, args.out_dir, relaxation=not args.no_relaxation,
                    progress=sys.stderr, threads=args.threads)
    print(args.out_dir)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mttsp", description="Moving-target TSP solvers and experiments")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write random instances with nested windows")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--durations", type=float, nargs="+", default=[25.0, 50.0, 75.0])
    g.add_argument("--vmax", type=float, default=4.0)
    g.add_argument("--out-dir", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve one instance by branch-and-bound")
    s.add_argument("instance")
    s.add_argument("--formulation", choices=["gcs", "bigm"], default="gcs")
    s.add_argument("--time-limit", type=float, default=120.0)
    s.add_argument("--tol", type=float, default=bnb.DEFAULT_REL_TOL, help="relative gap tolerance")
    s.add_argument("--deterministic", action="store_true", help="single-threaded search")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--log", help="CSV progress log")
    s.add_argument("--tour-out", help="write the best tour here")
    s.add_argument("--dump", help="write the formulation as text")
    s.set_defaults(func=cmd_solve)

    r = sub.add_parser("relax", help="bound from the continuous relaxation")
    r.add_argument("instance")
    r.add_argument("--formulation", choices=["gcs", "bigm"], default="gcs")
    r.set_defaults(func=cmd_relax)

    o = sub.add_parser("oracle", help="exhaustive search over visit orders")
    o.add_argument("instance")
    o.add_argument("--tour-out")
    o.set_defaults(func=cmd_oracle)

    c = sub.add_parser("check", help="check a tour file against an instance")
    c.add_argument("instance")
    c.add_argument("tour")
    c.add_argument("--tol", type=float, default=oracle.FEASIBILITY_TOL)
    c.set_defaults(func=cmd_check)

    b = sub.add_parser("bench", help="run the experiment grid from a config file")
    b.add_argument("config")
    b.add_argument("--out-dir", default="bench_out")
    b.add_argument("--no-relaxation", action="store_true")
    b.add_argument("--threads", type=int, default=1)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be at least 1")
    try:
        return args.func(args)
    except (InstanceError, WindowAssignmentError, ValueError) as exc:
        print(f"mttsp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"mttsp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
