"""Run configuration: one JSON file describes a complete solve.

Every random choice is driven by an explicit seed in the file, so a
config identifies a reproducible run.  Command-line flags only pick the
config file, the output directory, and a couple of overrides.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .optimize import OptimizerOptions, SgdFallbackOptions

__all__ = [
    "PointsConfig",
    "SurrogateConfig",
    "SolutionConfig",
    "OptimizerConfig",
    "PretrainConfig",
    "EvaluationConfig",
    "RunConfig",
    "load_config",
    "save_config",
]

KNOWN_PROBLEMS = ("advec1d", "diff1d", "advec2d", "diff2d", "diff_nd", "custom")


@dataclass
class PointsConfig:
    interior: int = 1000
    boundary: int = 500
    distance_subset: int | None = None  # None: leading tenth of the interior set
    interior_strategy: str = "uniform-random"  # grid | uniform-random | sobol
    boundary_strategy: str = "uniform"  # uniform | stratified
    seed: int = 0


@dataclass
class SurrogateConfig:
    """G or D description.

    mode 'auto' picks the 1D closed forms on intervals and trains a
    network otherwise; 'closed-form' takes an explicit form + params;
    'train' always fits a network (hidden sizes optional).
    """

    mode: str = "auto"
    form: str | None = None
    params: dict = field(default_factory=dict)
    hidden: tuple[int, ...] | None = None
    seed: int = 0
    max_iterations: int = 2000


@dataclass
class SolutionConfig:
    hidden: tuple[int, ...] = (10, 10)
    init_seed: int = 0


@dataclass
class OptimizerConfig:
    max_iterations: int = 20000
    cost_tolerance: float = 1e-5
    gradient_tolerance: float = 1e-12
    sgd_steps: int = 1000
    sgd_learning_rate: float = 1e-9
    sgd_batch_size: int | None = 32
    max_fallback_rounds: int = 50
    seed: int = 0

    def to_options(self) -> OptimizerOptions:
        return OptimizerOptions(
            max_iterations=self.max_iterations,
            cost_tolerance=self.cost_tolerance,
            gradient_tolerance=self.gradient_tolerance,
            sgd_fallback=SgdFallbackOptions(
                steps=self.sgd_steps,
                learning_rate=self.sgd_learning_rate,
                batch_size=self.sgd_batch_size,
            ),
            max_fallback_rounds=self.max_fallback_rounds,
        )


@dataclass
class PretrainConfig:
    enabled: bool = False
    max_iterations: int = 500


@dataclass
class EvaluationConfig:
    interior: int = 400
    boundary: int = 80
    seed: int = 1
    # when > 0, measure the max abs error on the evaluation grid every
    # this many gradient calls during training (needs an exact solution)
    checkpoint_every: int = 0


@dataclass
class RunConfig:
    problem: str = "diff2d"
    dim: int = 3  # used by diff_nd only
    domain_file: str | None = None  # polygon vertex file for 'custom'
    distance_backend: str = "kdtree"
    points: PointsConfig = field(default_factory=PointsConfig)
    solution: SolutionConfig = field(default_factory=SolutionConfig)
    extension: SurrogateConfig = field(default_factory=SurrogateConfig)
    distance: SurrogateConfig = field(default_factory=SurrogateConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    output_dir: str | None = None

    def validate(self) -> None:
        if self.problem not in KNOWN_PROBLEMS:
            raise ValueError(f"unknown problem id {self.problem!r}")
        if self.points.interior < 1 or self.points.boundary < 1:
            raise ValueError("point counts must be positive")
        if self.points.distance_subset is not None and self.points.distance_subset < 1:
            raise ValueError("distance subset size must be positive")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        for name, sub in (("extension", self.extension), ("distance", self.distance)):
            if sub.mode not in ("auto", "closed-form", "train"):
                raise ValueError(f"{name}.mode must be auto, closed-form, or train")
            if sub.mode == "closed-form" and not sub.form:
                raise ValueError(f"{name}: closed-form mode needs a form")
        if self.distance_backend not in ("naive", "kdtree"):
            raise ValueError("distance backend must be naive or kdtree")
        if self.domain_file is not None and not Path(self.domain_file).exists():
            raise FileNotFoundError(f"polygon file not found: {self.domain_file}")
        if self.evaluation.interior < 1:
            raise ValueError("evaluation grid needs at least one point")

    def to_dict(self) -> dict:
        return asdict(self)


def _build(cls, data: dict):
    fields = {f: data[f] for f in data if f in cls.__dataclass_fields__}
    return cls(**fields)


def _from_dict(data: dict) -> RunConfig:
    data = dict(data)
    nested = {
        "points": PointsConfig,
        "solution": SolutionConfig,
        "extension": SurrogateConfig,
        "distance": SurrogateConfig,
        "optimizer": OptimizerConfig,
        "pretrain": PretrainConfig,
        "evaluation": EvaluationConfig,
    }
    for key, cls in nested.items():
        if key in data and isinstance(data[key], dict):
            data[key] = _build(cls, data[key])
    cfg = _build(RunConfig, data)
    for sub in (cfg.solution, cfg.extension, cfg.distance):
        if getattr(sub, "hidden", None) is not None:
            sub.hidden = tuple(int(h) for h in sub.hidden)
    return cfg


def load_config(path) -> RunConfig:
    cfg = _from_dict(json.loads(Path(path).read_text()))
    cfg.validate()
    return cfg


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=1) + "\n")
