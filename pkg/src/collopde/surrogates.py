"""Boundary-data extension G and smoothed-distance D surrogates.

Both enter the trial solution u_hat = G + D * y and stay frozen while the
solution network trains, so the operator only ever needs their values and
first/second spatial derivatives.  Two interchangeable realizations sit
behind one evaluation interface:

* ClosedFormSurrogate: exact low-order expressions (constants, affine
  maps, the interval distance forms x - a and (x - a)(b - x)), available
  whenever the geometry makes them obvious;
* TrainedSurrogate: a small sigmoid network fit by BFGS to boundary data
  (extension) or to normalized distance samples (distance), evaluated
  through the derivative recursions.

Distance surrogates remember the normalization constant of their
training targets so raw distances can be reconstructed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .derivatives import data_fit_cost_grad, spatial_jacobian, spatial_second
from .network import (
    Architecture,
    Network,
    feedforward,
    flatten_params,
    init_network,
    load_network,
    save_network,
    unflatten_params,
)
from .optimize import OptimizerOptions, OptimizeResult, hybrid_minimize

__all__ = [
    "SurrogateValues",
    "ClosedFormSurrogate",
    "TrainedSurrogate",
    "evaluate_surrogate",
    "default_surrogate_arch",
    "train_extension",
    "train_distance",
    "constant_extension",
    "affine_extension",
    "interval_distance",
    "save_surrogate",
    "load_surrogate",
]


@dataclass
class SurrogateValues:
    """value (B,), gradient (B,N), non-mixed second derivatives (B,N)."""

    value: np.ndarray
    gradient: np.ndarray | None = None
    second: np.ndarray | None = None


@dataclass(frozen=True)
class ClosedFormSurrogate:
    """Exact surrogate described by a small serializable descriptor.

    forms:
      constant: value c
      affine: c0 + coeffs . x
      ramp: x - a                       (1D distance to a single endpoint)
      parabola: (x - a)(b - x)          (1D distance-like form for two endpoints)
    """

    form: str
    params: dict

    def __post_init__(self):
        if self.form not in ("constant", "affine", "ramp", "parabola"):
            raise ValueError(f"unknown closed form {self.form!r}")

    def evaluate(self, x: np.ndarray, order: int) -> SurrogateValues:
        B, N = x.shape
        if self.form == "constant":
            c = float(self.params["value"])
            val = np.full(B, c)
            grad = np.zeros((B, N))
            sec = np.zeros((B, N))
        elif self.form == "affine":
            coeffs = np.asarray(self.params["coeffs"], dtype=float)
            if coeffs.size != N:
                raise ValueError("affine coefficient count does not match dimension")
            val = float(self.params["intercept"]) + x @ coeffs
            grad = np.broadcast_to(coeffs, (B, N)).copy()
            sec = np.zeros((B, N))
        elif self.form == "ramp":
            if N != 1:
                raise ValueError("ramp form is one-dimensional")
            a = float(self.params["a"])
            val = x[:, 0] - a
            grad = np.ones((B, 1))
            sec = np.zeros((B, 1))
        else:  # parabola
            if N != 1:
                raise ValueError("parabola form is one-dimensional")
            a, b = float(self.params["a"]), float(self.params["b"])
            t = x[:, 0]
            val = (t - a) * (b - t)
            grad = (a + b - 2 * t)[:, None]
            sec = np.full((B, 1), -2.0)
        return SurrogateValues(
            value=val,
            gradient=grad if order >= 1 else None,
            second=sec if order >= 2 else None,
        )


@dataclass
class TrainedSurrogate:
    """Network-backed surrogate plus the metadata of its fitting run."""

    net: Network
    kind: str  # "extension" | "distance"
    normalization: float = 1.0
    final_cost: float = np.nan
    iterations: int = 0
    boundary_max_abs: float = np.nan

    def __post_init__(self):
        if self.kind not in ("extension", "distance"):
            raise ValueError(f"unknown surrogate kind {self.kind!r}")
        if self.net.arch.output_dim != 1:
            raise ValueError("surrogates are scalar valued")

    def evaluate(self, x: np.ndarray, order: int) -> SurrogateValues:
        tape = feedforward(self.net, x)
        val = tape.output[:, 0]
        grad = sec = None
        if order >= 1:
            first = spatial_jacobian(self.net, tape)
            grad = first.output_jacobian[:, 0, :]
            if order >= 2:
                sec = spatial_second(self.net, tape, first).output_second[:, 0, :]
        return SurrogateValues(value=val, gradient=grad, second=sec)


SurrogateModel = ClosedFormSurrogate | TrainedSurrogate


def evaluate_surrogate(model: SurrogateModel, x, order: int = 2) -> SurrogateValues:
    """Common entry point: value plus derivatives up to `order` (0..2)."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1, or 2")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return model.evaluate(x, order)


def default_surrogate_arch(dim: int) -> Architecture:
    """Single hidden layer; 5 neurons in 1D, 20 otherwise."""
    return Architecture(dim, (5,) if dim == 1 else (20,), 1)


def _default_fit_options() -> OptimizerOptions:
    return OptimizerOptions(
        max_iterations=2000, cost_tolerance=1e-10, gradient_tolerance=1e-10
    )


def _fit_network(
    x: np.ndarray,
    targets: np.ndarray,
    arch: Architecture,
    opts: OptimizerOptions,
    seed: int,
) -> tuple[Network, OptimizeResult]:
    net0 = init_network(arch, seed)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    targets = np.asarray(targets, dtype=float).reshape(-1, 1)

    def cost(theta):
        return data_fit_cost_grad(unflatten_params(arch, theta), x, targets)[0]

    def grad(theta):
        return data_fit_cost_grad(unflatten_params(arch, theta), x, targets)[1]

    batch = opts.sgd_fallback.batch_size

    def sgd_grad(theta, rng):
        if batch is None or batch >= len(x):
            return grad(theta)
        idx = rng.choice(len(x), size=batch, replace=False)
        return data_fit_cost_grad(unflatten_params(arch, theta), x[idx], targets[idx])[1]

    res = hybrid_minimize(cost, grad, sgd_grad, flatten_params(net0), opts, seed=seed)
    if not np.isfinite(res.cost):
        raise RuntimeError("surrogate training diverged to a non-finite cost")
    return unflatten_params(arch, res.x), res


def train_extension(
    boundary_positions,
    boundary_values,
    arch: Architecture | None = None,
    opts: OptimizerOptions | None = None,
    seed: int = 0,
) -> TrainedSurrogate:
    """Fit G to the boundary data (x_b, g(x_b)); touches only those points."""
    x = np.atleast_2d(np.asarray(boundary_positions, dtype=float))
    if len(x) < 1:
        raise ValueError("need at least one boundary point")
    g = np.asarray(boundary_values, dtype=float).ravel()
    arch = arch or default_surrogate_arch(x.shape[1])
    net, res = _fit_network(x, g, arch, opts or _default_fit_options(), seed)
    fitted = feedforward(net, x).output[:, 0]
    return TrainedSurrogate(
        net=net,
        kind="extension",
        final_cost=res.cost,
        iterations=len(res.history),
        boundary_max_abs=float(np.max(np.abs(fitted - g))),
    )


def train_distance(
    subset_points,
    subset_distances,
    boundary_positions,
    arch: Architecture | None = None,
    opts: OptimizerOptions | None = None,
    seed: int = 0,
    normalization: float = 1.0,
) -> TrainedSurrogate:
    """Fit D on the coarse interior subset plus the boundary (target 0 there).

    subset_distances must already be normalized; the constant used is
    stored on the model so raw distances remain recoverable.
    """
    xs = np.atleast_2d(np.asarray(subset_points, dtype=float))
    xb = np.atleast_2d(np.asarray(boundary_positions, dtype=float))
    d = np.asarray(subset_distances, dtype=float).ravel()
    if len(xb) < 1:
        raise ValueError("need at least one boundary point")
    if len(d) != len(xs):
        raise ValueError("one distance target per subset point required")
    x = np.vstack([xs, xb])
    t = np.concatenate([d, np.zeros(len(xb))])
    arch = arch or default_surrogate_arch(x.shape[1])
    net, res = _fit_network(x, t, arch, opts or _default_fit_options(), seed)
    on_boundary = feedforward(net, xb).output[:, 0]
    return TrainedSurrogate(
        net=net,
        kind="distance",
        normalization=float(normalization),
        final_cost=res.cost,
        iterations=len(res.history),
        boundary_max_abs=float(np.max(np.abs(on_boundary))),
    )


def constant_extension(value: float) -> ClosedFormSurrogate:
    return ClosedFormSurrogate(form="constant", params={"value": float(value)})


def affine_extension(intercept: float, coeffs) -> ClosedFormSurrogate:
    return ClosedFormSurrogate(
        form="affine",
        params={"intercept": float(intercept), "coeffs": [float(c) for c in np.atleast_1d(coeffs)]},
    )


def interval_distance(a: float, b: float, both_ends: bool) -> ClosedFormSurrogate:
    """x - a when only x = a carries data, else (x - a)(b - x)."""
    if both_ends:
        return ClosedFormSurrogate(form="parabola", params={"a": float(a), "b": float(b)})
    return ClosedFormSurrogate(form="ramp", params={"a": float(a)})


# ---------------------------------------------------------------- file round trip

def save_surrogate(model: SurrogateModel, path) -> None:
    path = Path(path)
    if isinstance(model, ClosedFormSurrogate):
        payload = {
            "format": "collopde-surrogate-v1",
            "variant": "closed-form",
            "form": model.form,
            "params": model.params,
        }
        path.write_text(json.dumps(payload, indent=1))
        return
    net_path = path.with_suffix(path.suffix + ".net")
    save_network(model.net, net_path)
    payload = {
        "format": "collopde-surrogate-v1",
        "variant": "trained",
        "kind": model.kind,
        "normalization": model.normalization,
        "final_cost": model.final_cost,
        "iterations": model.iterations,
        "boundary_max_abs": model.boundary_max_abs,
        "network_file": net_path.name,
    }
    path.write_text(json.dumps(payload, indent=1))


def load_surrogate(path) -> SurrogateModel:
    path = Path(path)
    payload = json.loads(path.read_text())
    if payload.get("format") != "collopde-surrogate-v1":
        raise ValueError(f"{path} is not a surrogate file")
    if payload["variant"] == "closed-form":
        return ClosedFormSurrogate(form=payload["form"], params=payload["params"])
    net = load_network(path.parent / payload["network_file"])
    return TrainedSurrogate(
        net=net,
        kind=payload["kind"],
        normalization=payload["normalization"],
        final_cost=payload["final_cost"],
        iterations=payload["iterations"],
        boundary_max_abs=payload["boundary_max_abs"],
    )
