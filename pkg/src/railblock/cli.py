"""Command-line entry point.

Subcommands: solve (integrated / reduced / sequential), paths, stats,
oracle, validate, report.  Exit codes: 0 optimal or clean success, 1
feasible but not proven optimal, 2 infeasible (or a solution that fails
validation), 3 usage or input errors.  Runs that write outputs also write a
manifest JSON next to them; set RAILBLOCK_LOG=debug|info|error to control
logging.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import pathlib
import sys
import time

from . import __version__
from .builders import (
    FULL,
    REDUCED,
    BuildError,
    BuildOptions,
    InfeasibleByConstruction,
    build_block_model,
    build_integrated,
    build_path_model,
)
from .instance import Instance, InstanceError, load_instance
from .milp import MilpModel, predicted_size, stats
from .mps import export_mps
from .oracle import OracleLimitError, OracleLimits, oracle_optimum, random_instance
from .pathgen import PathCatalog, PathEnumerationError, build_catalog
from .sequential import (
    StageError,
    TbspSolution,
    SolutionError,
    check_link_trains,
    fixed_routes,
    integrated_assignment,
    solution_from_values,
    solve_sequential,
)
from .solver import LIMIT, OPTIMAL, SolveOptions, solve_milp
from .validate import (
    RunReport,
    SolutionFormatError,
    compare_reports,
    render_comparison,
    render_report,
    validate,
)

log = logging.getLogger("railblock.cli")

EXIT_OK = 0
EXIT_FEASIBLE = 1
EXIT_INFEASIBLE = 2
EXIT_USAGE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 3, not argparse's 2
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _setup_logging():
    level = os.environ.get("RAILBLOCK_LOG", "error").lower()
    mapping = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=mapping.get(level, logging.ERROR), format="%(name)s %(levelname)s %(message)s")


def _digest(path: str) -> str:
    h = hashlib.sha256()
    target = pathlib.Path(path)
    if target.is_dir():
        for child in sorted(target.rglob("*")):
            if child.is_file():
                h.update(child.name.encode())
                h.update(child.read_bytes())
    else:
        h.update(target.read_bytes())
    return h.hexdigest()


def _gap(upper: float | None, lower: float | None) -> float | None:
    if upper is None or lower is None:
        return None
    diff = max(0.0, upper - lower)
    if abs(upper) < 1e-12:
        return 0.0 if diff <= 1e-12 else math.inf
    return diff / upper


def _write_manifest(out_path: pathlib.Path, manifest: dict) -> None:
    target = out_path.with_name(out_path.name + ".manifest.json")
    target.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _build_parser() -> _Parser:
    parser = _Parser(prog="railblock", description="Train blocking and shipment path optimization toolkit")
    parser.add_argument("--version", action="version", version=f"railblock {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve an instance", parents=[], add_help=True)
    solve.add_argument("--instance", required=True)
    solve.add_argument("--mode", choices=["integrated", "reduced", "sequential"], default="reduced")
    solve.add_argument("--no-detour", action="store_true", help="drop the detour bound")
    solve.add_argument("--time-limit", type=float, default=600.0)
    solve.add_argument("--gap", type=float, default=1e-9)
    solve.add_argument("--threads", type=int, default=1)
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--export-mps", metavar="DIR", default=None)
    solve.add_argument("--solution", metavar="OUT.json", default=None)
    solve.add_argument("--warm-start", metavar="SOL.json", default=None)
    solve.add_argument("--lb", type=float, default=None, help="externally supplied lower bound (sequential)")
    solve.add_argument("--lb-source", default=None, help="where the external lower bound came from")

    paths = sub.add_parser("paths", help="enumerate legal paths")
    paths.add_argument("--instance", required=True)
    paths.add_argument("--od", default=None, help="origin,destination")
    paths.add_argument("--epsilon", type=float, default=None)
    paths.add_argument("--all", action="store_true", help="dump the whole catalog as JSON")

    st = sub.add_parser("stats", help="model size statistics")
    st.add_argument("--instance", required=True)
    st.add_argument("--mode", choices=["integrated", "reduced", "path", "block"], required=True)

    orc = sub.add_parser("oracle", help="certified optimum by exhaustive enumeration")
    orc.add_argument("--instance", required=True)
    orc.add_argument("--solution", metavar="OUT.json", default=None)

    val = sub.add_parser("validate", help="check a solution against every constraint family")
    val.add_argument("--instance", required=True)
    val.add_argument("--solution", required=True)
    val.add_argument("--json", action="store_true")

    rep = sub.add_parser("report", help="cost table for one solution or a comparison of two")
    rep.add_argument("--solution", default=None)
    rep.add_argument("--a", dest="report_a", default=None)
    rep.add_argument("--b", dest="report_b", default=None)
    rep.add_argument("--instance", default=None, help="recompute costs against this instance")

    gen = sub.add_parser("generate", help="write a reproducible random test instance")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", required=True)
    return parser


def _catalog_for(inst: Instance, no_detour: bool, opts: BuildOptions) -> PathCatalog:
    if no_detour:
        return build_catalog(inst, epsilon=math.inf, truncate_at=opts.no_detour_path_cap)
    return build_catalog(inst)


def _runtime_for(path: pathlib.Path) -> float:
    manifest = path.with_name(path.name + ".manifest.json")
    if manifest.exists():
        try:
            doc = json.loads(manifest.read_text(encoding="utf-8"))
            return float(doc.get("timings", {}).get("total", 0.0))
        except (json.JSONDecodeError, TypeError, ValueError):
            return 0.0
    return 0.0


def _cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    solve_opts = SolveOptions(
        time_limit=args.time_limit,
        rel_gap_target=args.gap,
        threads=args.threads,
        seed=args.seed,
    )
    build_opts = BuildOptions(
        reduction=FULL if args.mode == "integrated" else REDUCED,
        include_detour=not args.no_detour,
    )
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    catalog = _catalog_for(inst, args.no_detour, build_opts)
    timings["catalog"] = time.perf_counter() - t0

    warm = None
    if args.warm_start:
        warm = TbspSolution.load(args.warm_start)

    result_summary: dict = {}
    solution = None
    exit_code = EXIT_OK
    mps_dir = pathlib.Path(args.export_mps) if args.export_mps else None
    if mps_dir:
        mps_dir.mkdir(parents=True, exist_ok=True)

    if args.mode in ("integrated", "reduced"):
        t1 = time.perf_counter()
        model = build_integrated(inst, catalog, build_opts)
        timings["build"] = time.perf_counter() - t1
        if mps_dir:
            export_mps(model, mps_dir / f"{args.mode}.mps")
        start = integrated_assignment(model, inst, catalog, warm) if warm is not None else None
        t2 = time.perf_counter()
        res = solve_milp(model, solve_opts, start=start)
        timings["solve"] = time.perf_counter() - t2
        result_summary = {
            "status": res.status,
            "upper_bound": res.objective,
            "lower_bound": res.best_bound,
            "gap": res.gap,
            "nodes": res.node_count,
            "lb_source": "branch-and-bound",
        }
        if res.status == OPTIMAL:
            exit_code = EXIT_OK
        elif res.status == LIMIT and res.objective is not None:
            exit_code = EXIT_FEASIBLE
        elif res.status == "infeasible":
            exit_code = EXIT_INFEASIBLE
        else:
            exit_code = EXIT_INFEASIBLE
        if res.values is not None:
            solution = solution_from_values(inst, res.values)
        print(f"status: {res.status}")
        if res.objective is not None:
            print(f"objective (car-hour): {res.objective:.6f}")
        if res.best_bound is not None:
            print(f"best bound: {res.best_bound:.6f}")
        if res.gap is not None:
            print(f"gap: {res.gap * 100.0:.2f}%")
        print(f"nodes: {res.node_count}")
    else:  # sequential
        try:
            t1 = time.perf_counter()
            outcome = solve_sequential(inst, catalog, build_opts, solve_opts)
            timings["solve"] = time.perf_counter() - t1
        except StageError as exc:
            print(f"{exc.stage} stage failed: status {exc.result.status}", file=sys.stderr)
            return EXIT_INFEASIBLE
        solution = outcome.solution
        if mps_dir:
            export_mps(outcome.path_model, mps_dir / "path.mps")
            export_mps(outcome.block_model, mps_dir / "block.mps")
        upper = solution.costs.total
        gap = _gap(upper, args.lb)
        result_summary = {
            "status": "feasible",
            "upper_bound": upper,
            "lower_bound": args.lb,
            "gap": gap,
            "lb_source": args.lb_source if args.lb is not None else "unavailable",
            "stage_status": {"path": outcome.stage_path.status, "block": outcome.stage_block.status},
        }
        both_optimal = outcome.stage_path.status == OPTIMAL and outcome.stage_block.status == OPTIMAL
        exit_code = EXIT_OK if both_optimal else EXIT_FEASIBLE
        print(f"stage path: {outcome.stage_path.status} ({outcome.stage_path.objective:.6f} car-km weighted)")
        print(f"stage block: {outcome.stage_block.status}")
        print(f"total (car-hour): {upper:.6f}")
        print("gap: " + (f"{gap * 100.0:.2f}%" if gap is not None else "-- (no lower bound supplied)"))
        overloads = [entry for entry in check_link_trains(solution, inst) if entry.violated]
        for entry in overloads:
            print(f"warning: link {entry.link} carries {entry.trains:.3f} trains, capacity {entry.capacity:.3f}")

    timings["total"] = time.perf_counter() - t0
    if args.solution and solution is not None:
        out_path = pathlib.Path(args.solution)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        solution.save(out_path)
        manifest = {
            "command": " ".join(sys.argv),
            "instance_digest": _digest(args.instance),
            "mode": args.mode,
            "options": {
                "time_limit": args.time_limit,
                "gap": args.gap,
                "threads": args.threads,
                "seed": args.seed,
                "no_detour": args.no_detour,
            },
            "timings": timings,
            "result": result_summary,
        }
        _write_manifest(out_path, manifest)
    return exit_code


def _cmd_paths(args) -> int:
    inst = load_instance(args.instance)
    eps = args.epsilon
    if args.all:
        catalog = build_catalog(inst, epsilon=eps)
        doc = {}
        for (o, d), paths in sorted(catalog.legal_paths.items()):
            doc[f"{o},{d}"] = {
                "shortest_km": catalog.shortest_km[(o, d)],
                "paths": [{"nodes": list(p.nodes), "km": p.length} for p in paths],
                "links": sorted(list(arc) for arc in catalog.link_candidates[(o, d)]),
                "blocks": sorted(list(pq) for pq in catalog.block_candidates[(o, d)]),
            }
        print(json.dumps(doc, indent=2))
        return EXIT_OK
    if not args.od:
        raise _UsageError("paths needs --od o,d or --all")
    try:
        o, d = (int(part) for part in args.od.split(","))
    except ValueError:
        raise _UsageError(f"cannot parse --od {args.od!r}; expected 'origin,destination'")
    from .pathgen import enumerate_legal_paths

    paths = enumerate_legal_paths(inst, o, d, epsilon=eps)
    if not paths:
        print(f"no legal path from {o} to {d}")
        return EXIT_OK
    for path in paths:
        print(f"{' -> '.join(str(n) for n in path.nodes)}  ({path.length:g} km)")
    return EXIT_OK


def _cmd_stats(args) -> int:
    inst = load_instance(args.instance)
    catalog = build_catalog(inst)
    v, e = len(inst.yards), len(inst.links)
    if args.mode == "integrated":
        model = build_integrated(inst, catalog, BuildOptions(reduction=FULL))
        predicted = predicted_size(v, e, "integrated")
    elif args.mode == "reduced":
        model = build_integrated(inst, catalog, BuildOptions(reduction=REDUCED))
        predicted = None
    elif args.mode == "path":
        model = build_path_model(inst, catalog, BuildOptions(reduction=FULL))
        predicted = predicted_size(v, e, "path")
    else:
        routes = fixed_routes(inst, catalog, {})
        from .sequential import _as_paths

        model = build_block_model(inst, _as_paths(inst, routes), BuildOptions(reduction=FULL))
        predicted = predicted_size(v, e, "block")
    counted = stats(model)
    print(f"mode: {args.mode}")
    print(f"# of variables   : {counted.variables:,}")
    print(f"# of constraints : {counted.constraints:,}")
    print(f"# of non-zero elements in coefficient matrix: {counted.nonzeros:,}")
    if predicted is not None:
        print(f"estimate ({v} yards, {e} links): {predicted[0]:,} variables, {predicted[1]:,} constraints")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    inst = load_instance(args.instance)
    catalog = build_catalog(inst)
    result = oracle_optimum(inst, catalog, OracleLimits())
    if result.status != "optimal":
        print("infeasible")
        return EXIT_INFEASIBLE
    print(f"certified optimum (car-hour): {result.objective:.6f}")
    doc = result.solution.to_dict()
    if args.solution:
        out = pathlib.Path(args.solution)
        out.parent.mkdir(parents=True, exist_ok=True)
        result.solution.save(out)
    else:
        print(json.dumps(doc, indent=2))
    return EXIT_OK


def _cmd_validate(args) -> int:
    inst = load_instance(args.instance)
    solution = TbspSolution.load(args.solution)
    violations, breakdown = validate(inst, solution)
    if args.json:
        doc = {
            "violations": [
                {"family": v.family, "index": list(v.index), "lhs": v.lhs, "rhs": v.rhs, "magnitude": v.magnitude}
                for v in violations
            ],
            "costs": {
                "car_km": breakdown.car_km,
                "accumulation": breakdown.accumulation,
                "reclassification": breakdown.reclassification,
                "total": breakdown.total,
            },
        }
        print(json.dumps(doc, indent=2))
    else:
        for v in violations:
            print(str(v))
        print(f"violations: {len(violations)}")
        print(f"recomputed total (car-hour): {breakdown.total:.6f}")
    return EXIT_OK if not violations else EXIT_INFEASIBLE


def _cmd_report(args) -> int:
    if args.report_a and args.report_b:
        if not args.instance:
            raise _UsageError("report comparison needs --instance to recompute costs")
        inst = load_instance(args.instance)
        reports = []
        for label, src in (("A", args.report_a), ("B", args.report_b)):
            sol = TbspSolution.load(src)
            _, costs = validate(inst, sol)
            reports.append(RunReport(costs=costs, runtime=_runtime_for(pathlib.Path(src)), label=label))
        rows = compare_reports(reports[0], reports[1])
        print(render_comparison(rows, a_label=args.report_a, b_label=args.report_b))
        return EXIT_OK
    if not args.solution:
        raise _UsageError("report needs --solution F, or --a S1 --b S2")
    sol = TbspSolution.load(args.solution)
    if args.instance:
        inst = load_instance(args.instance)
        _, costs = validate(inst, sol)
    else:
        costs = sol.costs
    print(render_report(RunReport(costs=costs, runtime=_runtime_for(pathlib.Path(args.solution)))))
    return EXIT_OK


def _cmd_generate(args) -> int:
    from .instance import save_instance

    inst = random_instance(args.seed)
    out = pathlib.Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_instance(inst, out)
    print(f"wrote {out}")
    return EXIT_OK


_COMMANDS = {
    "solve": _cmd_solve,
    "paths": _cmd_paths,
    "stats": _cmd_stats,
    "oracle": _cmd_oracle,
    "validate": _cmd_validate,
    "report": _cmd_report,
    "generate": _cmd_generate,
}


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InstanceError, SolutionError, SolutionFormatError, BuildError, OracleLimitError,
            PathEnumerationError, InfeasibleByConstruction) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, InfeasibleByConstruction):
            return EXIT_INFEASIBLE
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
