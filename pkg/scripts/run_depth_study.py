"""Iterations-to-tolerance across the matched-parameter depth ladder.

The five architectures 120 / 20x20 / 14x14x14 / 12^4 / 10^5 hold the
trainable parameter count nearly constant (481, 501, 477, 517, 481) so
any difference in training effort is attributable to depth alone.
"""

import argparse
from pathlib import Path

from collopde.config import (
    OptimizerConfig,
    PointsConfig,
    RunConfig,
    SurrogateConfig,
)
from collopde.pipeline import run_depth_study, write_depth_study_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--output", default="runs/depth_study")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--interior", type=int, default=200)
    ap.add_argument("--boundary", type=int, default=100)
    ap.add_argument("--max-iterations", type=int, default=20000)
    ap.add_argument("--cost-tolerance", type=float, default=1e-5)
    args = ap.parse_args()

    cfg = RunConfig(
        problem="diff2d",
        points=PointsConfig(interior=args.interior, boundary=args.boundary),
        extension=SurrogateConfig(max_iterations=2000),
        distance=SurrogateConfig(max_iterations=2000),
        optimizer=OptimizerConfig(
            max_iterations=args.max_iterations, cost_tolerance=args.cost_tolerance
        ),
    )
    seeds = tuple(int(s) for s in args.seeds.split(","))
    rows = run_depth_study(cfg, seeds=seeds)

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    write_depth_study_csv(rows, out / "depth_study.csv")

    print("depth hidden          params seed iterations converged")
    for r in rows:
        if r["error"]:
            print(f"{r['depth']:>5} {r['hidden']:<15} failed: {r['error']}")
        else:
            print(f"{r['depth']:>5} {r['hidden']:<15} {r['params']:>6} {r['seed']:>4} "
                  f"{r['iterations']:>10} {str(r['converged']):>9}")
    print(f"written: {out / 'depth_study.csv'}")


if __name__ == "__main__":
    main()
