"""Command-line driver.

Subcommands:
  solve     complete semi-discrete transport -> solution JSON + cells SVG
  singular  singular-set extraction and report -> JSON + SVG
  partial   partial transport and free-boundary report -> JSON + SVG
  verify    full verification suite -> consolidated report

Exit codes: 0 ok, 1 bad input, 2 solver/separation failure, 3 verification
failure.  Flags override fields of the problem JSON.  OT_THREADS caps
parallelism (the reference implementation runs sequentially, which always
respects the cap).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import singular as sg
from .geometry import Polygon
from .otsolve import NewtonStall, make_problem, solve_weights
from .partial import (
    NotSeparated,
    PartialProblem,
    classify_fb_points,
    fb_normal_check,
    graph_over_L_check,
    interior_ball_check,
    solve_partial,
)
from .svgplot import diagram_svg, partial_svg, singular_svg


class InputError(Exception):
    pass


def _load_json(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise InputError(f"problem file not found: {path}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise InputError(f"malformed JSON in {path} (line {e.lineno}): {e.msg}") from e


def _polygon_field(obj: dict, field: str, path: str) -> Polygon:
    if field not in obj:
        raise InputError(f"{path}: missing field '{field}'")
    try:
        return Polygon.from_json(obj[field])
    except Exception as e:
        raise InputError(f"{path}: invalid polygon in field '{field}': {e}") from e


def _dump(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def _threads_cap() -> int:
    try:
        return max(1, int(os.environ.get("OT_THREADS", "1")))
    except ValueError:
        return 1


def cmd_solve(args) -> int:
    obj = _load_json(args.problem)
    source = _polygon_field(obj, "source", args.problem)
    target = _polygon_field(obj, "target", args.problem)
    n = args.n if args.n is not None else int(obj.get("n_sites", 100))
    seed = args.seed if args.seed is not None else int(obj.get("seed", 1))
    lloyd = args.lloyd if args.lloyd is not None else int(obj.get("lloyd", 10))
    tol = args.tol if args.tol is not None else float(obj.get("tol", 1e-7))
    out = Path(args.out)

    problem = make_problem(source, target, n=n, seed=seed, lloyd_iters=lloyd)
    trace: list = []
    try:
        w, diag, pot = solve_weights(problem, tol=tol, trace=trace)
    except NewtonStall as e:
        print(f"solver stalled: {e}", file=sys.stderr)
        return 2
    residual = float(np.abs(diag.areas - problem.masses).max())
    sol = {
        "weights": [float(x) for x in w],
        "cells": [[[float(a), float(b)] for a, b in c.coords] for c in diag.cells],
        "residual": residual,
        "iters": len(trace) - 1,
        "sites": [[float(a), float(b)] for a, b in problem.sites],
        "masses": [float(x) for x in problem.masses],
    }
    _dump(out / "solution.json", sol)
    (out / "cells.svg").write_text(diagram_svg(diag, problem.source, problem.target_polygon))
    print(f"solved n={n} residual={residual:.3e} -> {out}/solution.json")
    return 0


def cmd_singular(args) -> int:
    obj = _load_json(args.problem)
    source = _polygon_field(obj, "source", args.problem)
    target = _polygon_field(obj, "target", args.problem)
    seed = args.seed if args.seed is not None else int(obj.get("seed", 1))
    lloyd = args.lloyd if args.lloyd is not None else int(obj.get("lloyd", 10))
    tol = args.tol if args.tol is not None else float(obj.get("tol", 1e-7))
    n0 = args.n if args.n is not None else int(obj.get("n_sites", 800))
    levels = [n0 * 4**k for k in range(max(1, args.levels))]
    out = Path(args.out)
    m = len(target.coords)

    report_levels = []
    exit_code = 0
    for n in levels:
        problem = make_problem(source, target, n=n, seed=seed, lloyd_iters=lloyd)
        try:
            w, diag, pot = solve_weights(problem, tol=tol)
        except NewtonStall as e:
            print(f"solver stalled at n={n}: {e}", file=sys.stderr)
            return 2
        edges = sg.detect_singular_edges(diag, target)
        graph = sg.build_graph(diag, target, edges, source=problem.source)
        chains = sg.chain_edges(graph)
        spacing = sg.median_site_spacing(problem.sites)
        classes = sg.classify_nodes(graph, target, tol=2 * spacing)
        counts = sg.class_counts_clustered(graph, classes, 1.5 * spacing)
        angles = sg.chain_turning_angles(graph, chains, classes)
        interior = sg.sigma2_interior_edge_ids(graph, chains, classes)
        obliq = [sg.check_obliqueness(edges[k], target) for k in interior]
        # Hard invariant: edge perpendicular to its dual.
        worst_perp = 0.0
        for e in edges:
            d = np.asarray(e.normal)
            segv = np.asarray(e.edge.b) - np.asarray(e.edge.a)
            worst_perp = max(worst_perp, abs(float(d @ segv)) / np.hypot(*segv))
        if worst_perp > 1e-9:
            print(f"normal-formula invariant violated: {worst_perp:.3e}", file=sys.stderr)
            exit_code = 2
        report_levels.append(
            {
                "n": n,
                "edges": [
                    {
                        "cells": list(e.cell_pair),
                        "edge": [[*e.edge.a], [*e.edge.b]],
                        "dual": [[*e.dual.a], [*e.dual.b]],
                        "normal": [*e.normal],
                    }
                    for e in edges
                ],
                "nodes": [
                    {
                        "location": [*graph.nodes[k].location],
                        "degree": graph.nodes[k].degree,
                        "class": classes[k].tag,
                        "evidence": {
                            "vertices": list(classes[k].touched_vertices),
                            "edges": list(classes[k].touched_edges),
                        },
                    }
                    for k in range(len(graph.nodes))
                ],
                "chains": [list(map(int, c)) for c in chains],
                "counts": counts,
                "diagnostics": {
                    "max_turning_angle": float(max(angles)) if angles else 0.0,
                    "obliqueness_min": float(min(min(d) for d in obliq)) if obliq else None,
                    "normal_formula_max_dev": worst_perp,
                },
            }
        )
        if n == levels[-1]:
            (out / "singular.svg").parent.mkdir(parents=True, exist_ok=True)
            (out / "singular.svg").write_text(
                singular_svg(diag, problem.source, target, graph, chains, classes)
            )
    report = {
        "levels": report_levels,
        "bounds": {"sigma1_max": m, "sigma2pp_max": m * (m - 1) * (m - 2) // 6},
        "environment": {"seed": seed, "version": __version__},
    }
    _dump(out / "singular.json", report)
    print(f"singular report for levels {levels} -> {out}/singular.json")
    return exit_code


def cmd_partial(args) -> int:
    obj = _load_json(args.problem)
    source = _polygon_field(obj, "source", args.problem)
    target = _polygon_field(obj, "target", args.problem)
    mass = args.mass if args.mass is not None else obj.get("mass")
    if mass is None:
        raise InputError(f"{args.problem}: missing field 'mass'")
    n = args.n if args.n is not None else int(obj.get("n_sites", 256))
    seed = args.seed if args.seed is not None else int(obj.get("seed", 1))
    out = Path(args.out)
    try:
        problem = PartialProblem(source=source, target=target, mass=float(mass))
        sol = solve_partial(problem, n=n, seed=seed)
    except NotSeparated as e:
        print(f"domains not separated: {e}", file=sys.stderr)
        return 2
    checks: dict = {"stay_put_residual": sol.stay_put_residual}
    if len(sol.free_boundary):
        mult, lip = graph_over_L_check(sol.free_boundary, min_separation=2 * sol.source_spacing)
        checks["graph_over_L"] = {"multiplicity": mult, "lipschitz_estimate": lip}
        checks["fb_normal_max_err"] = fb_normal_check(sol)
        classes, counts, bounds = classify_fb_points(sol)
        checks["fb_counts"] = counts
        checks["fb_bounds"] = bounds
        fb_classes = [
            {
                "tag": c.tag,
                "location": [*c.location],
                "vertices": list(c.touched_vertices),
                "edges": list(c.touched_edges),
            }
            for c in classes
        ]
    else:
        checks["empty_boundary"] = True
        fb_classes = []
    checks["interior_ball_violations"] = interior_ball_check(sol)
    report = {
        "plan": [[int(i), int(j), float(m_)] for i, j, m_ in sol.plan.couplings],
        "active_source": [int(k) for k in np.flatnonzero(sol.active_source)],
        "active_target": [int(k) for k in np.flatnonzero(sol.active_target)],
        "free_boundary": [[float(a), float(b)] for a, b in sol.free_boundary],
        "fb_classes": fb_classes,
        "checks": checks,
        "environment": {"seed": seed, "n": n, "version": __version__},
    }
    _dump(out / "partial.json", report)
    (out / "partial.svg").write_text(partial_svg(sol))
    print(f"partial solved mass={mass} n={n} -> {out}/partial.json")
    return 0


def cmd_verify(args) -> int:
    from .verify import run_verify

    report, timings = run_verify(
        seed_base=args.seed if args.seed is not None else 1,
        quick=args.quick,
        force_fail=args.force_fail,
    )
    out = Path(args.out)
    _dump(out / "verify_report.json", report)
    _dump(out / "verify_timings.json", timings)
    failed = [r["check_id"] for r in report["records"] if r["status"] != "pass"]
    for r in report["records"]:
        print(f"[{r['status']:4s}] {r['check_id']}")
    if failed:
        print(f"FAILED: {', '.join(failed)}", file=sys.stderr)
        return 3
    print(f"all {len(report['records'])} checks passed -> {out}/verify_report.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polyot", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_problem=True):
        if needs_problem:
            sp.add_argument("--problem", required=True, help="problem JSON path")
        sp.add_argument("--n", type=int, default=None, help="site/sample count")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--tol", type=float, default=None)
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--lloyd", type=int, default=None, help="Lloyd iterations")

    sp = sub.add_parser("solve", help="complete semi-discrete transport")
    common(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("singular", help="singular-set extraction and report")
    common(sp)
    sp.add_argument("--levels", type=int, default=1, help="refinement levels (x4 sites each)")
    sp.set_defaults(func=cmd_singular)

    sp = sub.add_parser("partial", help="partial transport and free boundary")
    common(sp)
    sp.add_argument("--mass", type=float, default=None, help="transported mass")
    sp.set_defaults(func=cmd_partial)

    sp = sub.add_parser("verify", help="run the verification suite")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default="out")
    sp.add_argument("--quick", action="store_true", help="reduced refinement levels")
    sp.add_argument("--force-fail", action="store_true", help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _ = _threads_cap()
    try:
        return args.func(args)
    except InputError as e:
        print(f"input error: {e}", file=sys.stderr)
        return 1
    except NotSeparated as e:
        print(f"domains not separated: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
