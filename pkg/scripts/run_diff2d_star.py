"""2D diffusion on the star polygon with trained G and D surrogates.

The heavier benchmark: 1000 interior and 500 boundary points, a 5x10
solution network, and periodic error checkpoints so the convergence of
the actual solution error can be plotted next to the cost history.
"""

import argparse

from collopde.config import (
    EvaluationConfig,
    OptimizerConfig,
    PointsConfig,
    RunConfig,
    SolutionConfig,
    SurrogateConfig,
)
from collopde.pipeline import run_solve


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--output", default="runs/diff2d_star")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--interior", type=int, default=1000)
    ap.add_argument("--boundary", type=int, default=500)
    ap.add_argument("--max-iterations", type=int, default=15000)
    ap.add_argument("--cost-tolerance", type=float, default=1e-4)
    args = ap.parse_args()

    cfg = RunConfig(
        problem="diff2d",
        points=PointsConfig(interior=args.interior, boundary=args.boundary, seed=args.seed),
        solution=SolutionConfig(hidden=(10,) * 5, init_seed=args.seed),
        extension=SurrogateConfig(seed=args.seed),
        distance=SurrogateConfig(seed=args.seed),
        optimizer=OptimizerConfig(
            max_iterations=args.max_iterations,
            cost_tolerance=args.cost_tolerance,
            seed=args.seed,
        ),
        evaluation=EvaluationConfig(interior=1000, boundary=200, checkpoint_every=100),
        output_dir=args.output,
    )
    art = run_solve(cfg)
    s = art.summary
    print(f"status {s['status']}, cost {s['final_cost']:.3e}, "
          f"{s['iterations']} iterations ({s['bfgs_iterations']} bfgs)")
    print(f"max abs error {s['max_abs_error']:.3e}, "
          f"mean abs error {s['mean_abs_error']:.3e}")
    print(f"wall clock {s['wall_clock_seconds']:.0f}s, artifacts in {art.output_dir}")


if __name__ == "__main__":
    main()
