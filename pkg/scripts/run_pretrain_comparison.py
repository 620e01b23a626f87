"""Effect of boundary pre-training on line-search robustness.

Fitting the solution net to the boundary data before residual training
starts the optimizer in a flatter region; the comparison records when
the first line-search failure happens with and without that warm start
(later is better, None means the run never failed).
"""

import argparse

from collopde.config import (
    OptimizerConfig,
    PointsConfig,
    PretrainConfig,
    RunConfig,
    SolutionConfig,
    SurrogateConfig,
)
from collopde.pipeline import run_solve


def run_once(seed: int, pretrain: bool, args):
    cfg = RunConfig(
        problem="diff2d",
        points=PointsConfig(interior=args.interior, boundary=args.boundary, seed=seed),
        solution=SolutionConfig(hidden=(10, 10), init_seed=seed),
        extension=SurrogateConfig(max_iterations=2000),
        distance=SurrogateConfig(max_iterations=2000),
        optimizer=OptimizerConfig(
            max_iterations=args.max_iterations,
            cost_tolerance=1e-12,
            gradient_tolerance=1e-14,
        ),
        pretrain=PretrainConfig(enabled=pretrain, max_iterations=300),
    )
    return run_solve(cfg).summary


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--interior", type=int, default=200)
    ap.add_argument("--boundary", type=int, default=100)
    ap.add_argument("--max-iterations", type=int, default=2500)
    args = ap.parse_args()

    print("seed  first failure (plain)  first failure (pretrained)")
    for seed in (int(s) for s in args.seeds.split(",")):
        plain = run_once(seed, False, args)
        warm = run_once(seed, True, args)
        print(f"{seed:>4}  {str(plain['first_failure']):>21}  {str(warm['first_failure']):>26}")


if __name__ == "__main__":
    main()
