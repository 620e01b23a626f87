"""1D advection benchmark: 100 equidistant points, 2x10 net, closed-form G and D.

The boundary extension is the constant inflow value and the distance
factor is the ramp from the inflow endpoint, so the trial solution meets
the boundary data exactly and training only has to shape the interior.
"""

import argparse

from collopde.config import (
    EvaluationConfig,
    OptimizerConfig,
    PointsConfig,
    RunConfig,
    SolutionConfig,
)
from collopde.pipeline import run_solve


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--output", default="runs/advec1d")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--max-iterations", type=int, default=5000)
    args = ap.parse_args()

    cfg = RunConfig(
        problem="advec1d",
        points=PointsConfig(interior=100, boundary=2, interior_strategy="grid", seed=args.seed),
        solution=SolutionConfig(hidden=(10, 10), init_seed=args.seed),
        optimizer=OptimizerConfig(
            max_iterations=args.max_iterations, cost_tolerance=1e-5, seed=args.seed
        ),
        evaluation=EvaluationConfig(interior=500, boundary=0),
        output_dir=args.output,
    )
    art = run_solve(cfg)
    s = art.summary
    print(f"status {s['status']}, cost {s['final_cost']:.3e}, "
          f"{s['iterations']} iterations, max abs error {s['max_abs_error']:.3e}")
    print(f"artifacts in {art.output_dir}")


if __name__ == "__main__":
    main()
