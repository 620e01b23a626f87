"""Command line entry points.

Subcommands mirror the pipeline operations: solve, depth-study,
gradcheck, evaluate, export-points.  Exit codes: 0 on success (and
convergence), 2 when a run finishes without converging or a check
fails, 1 on errors.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import load_config
from .geometry import apply_inflow_rule, export_points_csv
from .pipeline import (
    PipelineError,
    build_collocation,
    build_eval_grid,
    build_problem,
    evaluate_solution,
    load_run,
    run_depth_study,
    run_gradcheck,
    run_solve,
    write_depth_study_csv,
    write_evaluation_csv,
)
from .problems import Advection

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2


def _apply_master_seed(config, seed: int):
    config.points = replace(config.points, seed=seed)
    config.solution = replace(config.solution, init_seed=seed)
    config.optimizer = replace(config.optimizer, seed=seed)
    config.extension = replace(config.extension, seed=seed)
    config.distance = replace(config.distance, seed=seed)
    return config


def _cmd_solve(args) -> int:
    config = load_config(args.config)
    if args.output:
        config.output_dir = args.output
    if args.seed is not None:
        config = _apply_master_seed(config, args.seed)
    artifacts = run_solve(config)
    s = artifacts.summary
    if not args.quiet:
        print(f"problem        {s['problem']}")
        print(f"status         {s['status']}")
        print(f"final cost     {s['final_cost']:.6e}")
        print(f"iterations     {s['iterations']} ({s['bfgs_iterations']} bfgs)")
        if s["max_abs_error"] is not None:
            print(f"max abs error  {s['max_abs_error']:.6e}")
        if artifacts.output_dir:
            print(f"artifacts      {artifacts.output_dir}")
    return EXIT_OK if artifacts.converged else EXIT_NOT_CONVERGED


def _cmd_depth_study(args) -> int:
    config = load_config(args.config)
    seeds = tuple(int(s) for s in args.seeds.split(","))
    rows = run_depth_study(config, seeds=seeds)
    out = Path(args.output or config.output_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    path = out / "depth_study.csv"
    write_depth_study_csv(rows, path)
    if not args.quiet:
        print("depth hidden          params seed iterations converged final_cost")
        for r in rows:
            if r["error"]:
                print(f"{r['depth']:>5} {r['hidden']:<15} run failed: {r['error']}")
            else:
                print(
                    f"{r['depth']:>5} {r['hidden']:<15} {r['params']:>6} {r['seed']:>4} "
                    f"{r['iterations']:>10} {str(r['converged']):>9} {r['final_cost']:.3e}"
                )
        print(f"written: {path}")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    report = run_gradcheck(trials=args.trials, seed=args.seed)
    if args.output:
        report.to_csv(args.output)
    failed = [r for r in report.rows if not r["passed"]]
    if not args.quiet:
        print(f"{len(report.rows)} checks, {len(failed)} failed")
        for r in failed:
            print(
                f"FAIL {r['quantity']} ({r['arch']}, trial {r['trial']}): "
                f"rel err {r['rel_err']:.3e} > {r['tolerance']:.1e}"
            )
    return EXIT_OK if report.all_passed else EXIT_NOT_CONVERGED


def _cmd_evaluate(args) -> int:
    config, problem, bundle = load_run(args.run)
    grid = build_eval_grid(
        problem,
        args.interior or config.evaluation.interior,
        args.boundary if args.boundary is not None else config.evaluation.boundary,
        args.seed if args.seed is not None else config.evaluation.seed,
    )
    ev = evaluate_solution(bundle, problem, grid)
    out = Path(args.output) if args.output else Path(args.run) / "evaluation.csv"
    write_evaluation_csv(ev, out)
    if not args.quiet:
        if ev["max_abs_error"] is not None:
            print(f"max abs error  {ev['max_abs_error']:.6e}")
            print(f"mean abs error {ev['mean_abs_error']:.6e}")
        else:
            print("no exact solution; exported u_hat only")
        print(f"written: {out}")
    return EXIT_OK


def _cmd_export_points(args) -> int:
    config = load_config(args.config)
    problem = build_problem(config)
    cset = build_collocation(config, problem)
    if isinstance(problem.operator, Advection):
        cset = apply_inflow_rule(cset, problem.operator.velocity)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    export_points_csv(cset.interior, out / "interior.csv")
    export_points_csv(cset.boundary_positions, out / "boundary.csv")
    normals = np.array([bp.outward_normal for bp in cset.boundary])
    export_points_csv(normals, out / "boundary_normals.csv")
    if not args.quiet:
        print(f"{len(cset.interior)} interior, {len(cset.boundary)} boundary -> {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="collopde",
        description="Mesh-free PDE solver on collocation points with network trial solutions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run the full pipeline from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--output", default=None, help="artifact directory (overrides config)")
    p.add_argument("--seed", type=int, default=None, help="override every seed in the config")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(fn=_cmd_solve)

    p = sub.add_parser("depth-study", help="iterations-to-tolerance across the depth ladder")
    p.add_argument("--config", required=True)
    p.add_argument("--output", default=None)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(fn=_cmd_depth_study)

    p = sub.add_parser("gradcheck", help="analytical-vs-FD derivative report")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default=None, help="CSV report path")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("evaluate", help="re-evaluate a finished run on a fresh grid")
    p.add_argument("--run", required=True, help="artifact directory of a finished solve")
    p.add_argument("--interior", type=int, default=None)
    p.add_argument("--boundary", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--output", default=None)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("export-points", help="sample and export collocation points only")
    p.add_argument("--config", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(fn=_cmd_export_points)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except PipelineError as exc:
        print(f"error in stage '{exc.stage}': {exc.original}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
