"""Stationary advection/diffusion operators on the trial solution.

The trial solution u_hat(x) = G(x) + D(x) * y(x) satisfies the boundary
data through the frozen surrogates, so training only moves the solution
network y.  Applying the operator expands by the product rule:

  advection:  L u_hat = sum_i a_i ( dG/dx_i + (dD/dx_i) y + D dy/dx_i )
  diffusion:  L u_hat = sum_i ( d2G/dx_i2 + (d2D/dx_i2) y
                                + 2 (dD/dx_i)(dy/dx_i) + D d2y/dx_i2 )

and the parameter gradient of the residual cost replaces every y-factor
with the corresponding parameter derivative (dy/dp, d2y/dx_i dp,
d3y/dx_i2 dp), all of which come out of the derivative recursions in one
tape set per point batch.

The manufactured problems carry hand-differentiated forcings; tests pin
them against high-order finite differences of the exact solutions.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .derivatives import (
    spatial_jacobian,
    spatial_second,
    weighted_param_grad,
)
from .geometry import (
    Domain,
    HyperRectangle,
    Interval,
    Polygon,
    domain_dim,
    star_polygon,
    unit_square,
)
from .network import Network, feedforward, flatten_params, unflatten_params
from .surrogates import (
    ClosedFormSurrogate,
    SurrogateModel,
    SurrogateValues,
    evaluate_surrogate,
)

__all__ = [
    "Advection",
    "Diffusion",
    "operator_order",
    "PdeProblem",
    "AnsatzBundle",
    "ResidualEvaluation",
    "ansatz_eval",
    "apply_operator",
    "residual_cost_and_grad",
    "ResidualObjective",
    "manufactured_problem",
    "centroid_gaussian_problem",
    "post_process_boundary_1d",
    "MANUFACTURED_IDS",
]


@dataclass(frozen=True)
class Advection:
    velocity: np.ndarray

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.velocity, dtype=float))
        if v.ndim != 1 or np.all(v == 0):
            raise ValueError("advection velocity must be a non-zero vector")
        object.__setattr__(self, "velocity", v)


@dataclass(frozen=True)
class Diffusion:
    pass


Operator = Advection | Diffusion


def operator_order(op: Operator) -> int:
    return 1 if isinstance(op, Advection) else 2


@dataclass
class PdeProblem:
    operator: Operator
    forcing: Callable[[np.ndarray], np.ndarray]
    boundary_data: Callable[[np.ndarray], np.ndarray]
    domain: Domain
    exact_solution: Callable[[np.ndarray], np.ndarray] | None = None
    problem_id: str = "custom"

    def __post_init__(self):
        if isinstance(self.operator, Advection):
            if self.operator.velocity.size != domain_dim(self.domain):
                raise ValueError("velocity dimension does not match the domain")


@dataclass
class AnsatzBundle:
    extension: SurrogateModel
    distance: SurrogateModel
    solution_net: Network

    def __post_init__(self):
        if self.solution_net.arch.output_dim != 1:
            raise ValueError("solution network must be scalar valued")
        n = self.solution_net.arch.input_dim
        for part in (self.extension, self.distance):
            if hasattr(part, "net") and part.net.arch.input_dim != n:
                raise ValueError("surrogate input dimension differs from solution network")


@dataclass
class ResidualEvaluation:
    residuals: np.ndarray
    cost: float
    gradient: np.ndarray


def ansatz_eval(bundle: AnsatzBundle, x) -> np.ndarray:
    """u_hat(x) = G(x) + D(x) * y(x), batched."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    g = evaluate_surrogate(bundle.extension, x, order=0).value
    d = evaluate_surrogate(bundle.distance, x, order=0).value
    y = feedforward(bundle.solution_net, x).output[:, 0]
    return g + d * y


def _net_spatial(net: Network, x: np.ndarray, order: int):
    tape = feedforward(net, x)
    first = spatial_jacobian(net, tape)
    second = spatial_second(net, tape, first) if order >= 2 else None
    return tape, first, second


def _operator_value(
    op: Operator,
    sv_g: SurrogateValues,
    sv_d: SurrogateValues,
    y: np.ndarray,
    jy: np.ndarray,
    j2y: np.ndarray | None,
) -> np.ndarray:
    if isinstance(op, Advection):
        a = op.velocity
        return (
            sv_g.gradient @ a
            + (sv_d.gradient @ a) * y
            + sv_d.value * (jy @ a)
        )
    return (
        sv_g.second.sum(axis=1)
        + sv_d.second.sum(axis=1) * y
        + 2.0 * np.sum(sv_d.gradient * jy, axis=1)
        + sv_d.value * j2y.sum(axis=1)
    )


def _operator_param_grad(
    op: Operator,
    sv_d: SurrogateValues,
    pg_flat: np.ndarray,
    mg_flat: np.ndarray,
    smg_flat: np.ndarray | None,
) -> np.ndarray:
    """L applied to du_hat/dp: the y-factors swapped for parameter derivatives.

    Reference assembly over per-point flats; training uses the
    batch-contracted route in ResidualObjective._grad_on, which is
    property-tested against this one.
    """
    if isinstance(op, Advection):
        a = op.velocity
        return (sv_d.gradient @ a)[:, None] * pg_flat + sv_d.value[:, None] * np.einsum(
            "i,bip->bp", a, mg_flat, optimize=True
        )
    return (
        sv_d.second.sum(axis=1)[:, None] * pg_flat
        + 2.0 * np.einsum("bi,bip->bp", sv_d.gradient, mg_flat, optimize=True)
        + sv_d.value[:, None] * smg_flat.sum(axis=1)
    )


def apply_operator(bundle: AnsatzBundle, problem, x, tapes=None) -> np.ndarray:
    """L u_hat at each point of x, shape (B,).

    `problem` may be a PdeProblem or a bare operator.  `tapes`, when
    given, is the (forward, first, second) triple already computed for
    the solution network at x; second may be None only for advection.
    """
    operator = problem.operator if isinstance(problem, PdeProblem) else problem
    x = np.atleast_2d(np.asarray(x, dtype=float))
    order = operator_order(operator)
    sv_g = evaluate_surrogate(bundle.extension, x, order)
    sv_d = evaluate_surrogate(bundle.distance, x, order)
    if tapes is None:
        tapes = _net_spatial(bundle.solution_net, x, order)
    tape, first, second = tapes
    if order >= 2 and second is None:
        raise ValueError("diffusion needs second-order tapes")
    if first.output_jacobian.shape[0] != len(x):
        raise ValueError("tapes were computed for a different point batch")
    return _operator_value(
        operator,
        sv_g,
        sv_d,
        tape.output[:, 0],
        first.output_jacobian[:, 0, :],
        second.output_second[:, 0, :] if second is not None else None,
    )


class ResidualObjective:
    """Residual cost and gradient over a fixed collocation set.

    The surrogates are frozen during training, so their values and
    derivatives at the collocation points are computed once here.  Cost
    and gradient evaluations are memoized per parameter vector (the line
    search probes cost at several points before requesting a gradient).
    """

    def __init__(self, bundle: AnsatzBundle, problem: PdeProblem, points):
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        self.operator = problem.operator
        self.order = operator_order(problem.operator)
        self.arch = bundle.solution_net.arch
        self.bundle = bundle
        self.sv_g = evaluate_surrogate(bundle.extension, self.points, self.order)
        self.sv_d = evaluate_surrogate(bundle.distance, self.points, self.order)
        self.f = np.asarray(problem.forcing(self.points), dtype=float).ravel()
        if self.f.shape != (len(self.points),):
            raise ValueError("forcing must return one value per point")
        self._residual_cache: OrderedDict[bytes, np.ndarray] = OrderedDict()
        self._grad_cache: OrderedDict[bytes, np.ndarray] = OrderedDict()
        self._cache_size = 4

    def _put(self, cache, key, value):
        cache[key] = value
        while len(cache) > self._cache_size:
            cache.popitem(last=False)

    def _restrict(self, idx):
        sel = lambda a: None if a is None else a[idx]
        sv_g = SurrogateValues(
            value=self.sv_g.value[idx],
            gradient=sel(self.sv_g.gradient),
            second=sel(self.sv_g.second),
        )
        sv_d = SurrogateValues(
            value=self.sv_d.value[idx],
            gradient=sel(self.sv_d.gradient),
            second=sel(self.sv_d.second),
        )
        return self.points[idx], sv_g, sv_d, self.f[idx]

    def residuals(self, theta: np.ndarray) -> np.ndarray:
        return self._residuals_tapes(theta)[0]

    def _residuals_tapes(self, theta: np.ndarray):
        # residuals and spatial tapes are cached together so a gradient
        # request at the same theta (the common line-search pattern) skips
        # the forward and spatial recursions entirely
        key = np.asarray(theta, dtype=float).tobytes()
        hit = self._residual_cache.get(key)
        if hit is not None:
            return hit
        net = unflatten_params(self.arch, theta)
        tapes = _net_spatial(net, self.points, self.order)
        tape, first, second = tapes
        lu = _operator_value(
            self.operator,
            self.sv_g,
            self.sv_d,
            tape.output[:, 0],
            first.output_jacobian[:, 0, :],
            second.output_second[:, 0, :] if second is not None else None,
        )
        r = lu - self.f
        self._put(self._residual_cache, key, (r, net, tapes))
        return r, net, tapes

    def cost(self, theta: np.ndarray) -> float:
        r = self.residuals(theta)
        return 0.5 * float(r @ r) / len(r)

    def grad(self, theta: np.ndarray) -> np.ndarray:
        key = np.asarray(theta, dtype=float).tobytes()
        hit = self._grad_cache.get(key)
        if hit is not None:
            return hit
        r, net, tapes = self._residuals_tapes(theta)
        g = self._grad_on(net, tapes, self.sv_d, r)
        self._put(self._grad_cache, key, g)
        return g

    def _grad_on(self, net, tapes, sv_d, r) -> np.ndarray:
        tape, first, second = tapes
        rn = r / len(r)
        if isinstance(self.operator, Advection):
            a = self.operator.velocity
            w0 = rn * (sv_d.gradient @ a)
            w1 = (rn * sv_d.value)[:, None] * a[None, :]
            w2 = None
        else:
            w0 = rn * sv_d.second.sum(axis=1)
            w1 = 2.0 * rn[:, None] * sv_d.gradient
            w2 = np.broadcast_to((rn * sv_d.value)[:, None], sv_d.gradient.shape)
        return weighted_param_grad(net, tape, first, second, w0, w1, w2)

    def sgd_grad(self, theta: np.ndarray, rng: np.random.Generator, batch_size: int | None):
        """Minibatch gradient for the SGD escape loop."""
        n = len(self.points)
        if batch_size is None or batch_size >= n:
            return self.grad(theta)
        idx = rng.choice(n, size=batch_size, replace=False)
        pts, sv_g, sv_d, f = self._restrict(idx)
        net = unflatten_params(self.arch, theta)
        tapes = _net_spatial(net, pts, self.order)
        tape, first, second = tapes
        lu = _operator_value(
            self.operator,
            sv_g,
            sv_d,
            tape.output[:, 0],
            first.output_jacobian[:, 0, :],
            second.output_second[:, 0, :] if second is not None else None,
        )
        return self._grad_on(net, tapes, sv_d, lu - f)


def residual_cost_and_grad(bundle: AnsatzBundle, problem: PdeProblem, points) -> ResidualEvaluation:
    """One-shot residual evaluation at the bundle's current parameters."""
    obj = ResidualObjective(bundle, problem, points)
    theta = flatten_params(bundle.solution_net)
    r = obj.residuals(theta)
    if not np.all(np.isfinite(r)):
        raise ValueError("non-finite residual; training has diverged")
    return ResidualEvaluation(residuals=r, cost=obj.cost(theta), gradient=obj.grad(theta))


# ------------------------------------------------------- manufactured problems

MANUFACTURED_IDS = ("advec1d", "diff1d", "advec2d", "diff2d", "diff_nd")


def _advec1d() -> PdeProblem:
    def u(x):
        t = x[:, 0]
        return np.sin(2 * np.pi * t) * np.cos(4 * np.pi * t) + 1.0

    def f(x):
        t = x[:, 0]
        return 2 * np.pi * np.cos(2 * np.pi * t) * np.cos(4 * np.pi * t) - 4 * np.pi * np.sin(
            2 * np.pi * t
        ) * np.sin(4 * np.pi * t)

    return PdeProblem(
        operator=Advection(np.array([1.0])),
        forcing=f,
        boundary_data=u,
        domain=Interval(0.0, 1.0),
        exact_solution=u,
        problem_id="advec1d",
    )


def _diff1d() -> PdeProblem:
    def u(x):
        t = x[:, 0]
        return np.sin(np.pi * t / 2) * np.cos(2 * np.pi * t) + 1.0

    def f(x):
        t = x[:, 0]
        s, c = np.sin(np.pi * t / 2), np.cos(2 * np.pi * t)
        return (
            -(17 * np.pi**2 / 4) * s * c
            - 2 * np.pi**2 * np.cos(np.pi * t / 2) * np.sin(2 * np.pi * t)
        )

    return PdeProblem(
        operator=Diffusion(),
        forcing=f,
        boundary_data=u,
        domain=Interval(0.0, 1.0),
        exact_solution=u,
        problem_id="diff1d",
    )


def _advec2d() -> PdeProblem:
    def u(x):
        return 0.5 * np.cos(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])

    def f(x):
        sx, cx = np.sin(np.pi * x[:, 0]), np.cos(np.pi * x[:, 0])
        sy, cy = np.sin(np.pi * x[:, 1]), np.cos(np.pi * x[:, 1])
        return -(np.pi / 2) * sx * sy + (np.pi / 4) * cx * cy

    return PdeProblem(
        operator=Advection(np.array([1.0, 0.5])),
        forcing=f,
        boundary_data=u,
        domain=unit_square(),
        exact_solution=u,
        problem_id="advec2d",
    )


def _diff2d() -> PdeProblem:
    def u(x):
        return np.exp(-(2 * x[:, 0] ** 2 + 4 * x[:, 1] ** 2)) + 0.5

    def f(x):
        e = np.exp(-(2 * x[:, 0] ** 2 + 4 * x[:, 1] ** 2))
        return (16 * x[:, 0] ** 2 + 64 * x[:, 1] ** 2 - 12) * e

    return PdeProblem(
        operator=Diffusion(),
        forcing=f,
        boundary_data=u,
        domain=star_polygon(),
        exact_solution=u,
        problem_id="diff2d",
    )


def _diff_nd(dim: int) -> PdeProblem:
    gamma = 4.0
    m = np.full(dim, 0.5)

    def u(x):
        r2 = np.sum((x - m) ** 2, axis=1)
        return np.exp(-gamma * r2) + 0.5

    def f(x):
        r2 = np.sum((x - m) ** 2, axis=1)
        return (4 * gamma**2 * r2 - 2 * gamma * dim) * np.exp(-gamma * r2)

    return PdeProblem(
        operator=Diffusion(),
        forcing=f,
        boundary_data=u,
        domain=HyperRectangle(np.zeros(dim), np.ones(dim)),
        exact_solution=u,
        problem_id="diff_nd",
    )


def manufactured_problem(problem_id: str, dim: int = 3, domain: Polygon | None = None) -> PdeProblem:
    """Problems with hand-derived forcing for exact error measurement.

    'custom' builds the centroid-Gaussian diffusion problem on the given
    polygon (the star fixture when none is supplied).
    """
    if problem_id == "advec1d":
        return _advec1d()
    if problem_id == "diff1d":
        return _diff1d()
    if problem_id == "advec2d":
        return _advec2d()
    if problem_id == "diff2d":
        return _diff2d()
    if problem_id == "diff_nd":
        return _diff_nd(dim)
    if problem_id == "custom":
        return centroid_gaussian_problem(domain if domain is not None else star_polygon())
    raise ValueError(f"unknown problem id {problem_id!r}")


def centroid_gaussian_problem(domain: Polygon) -> PdeProblem:
    """Gaussian bump centered at the domain's area centroid (2D diffusion)."""
    m = domain.centroid

    def u(x):
        r2 = np.sum((x - m) ** 2, axis=1)
        return np.exp(-10.0 * r2)

    def f(x):
        r2 = np.sum((x - m) ** 2, axis=1)
        return (400.0 * r2 - 40.0) * np.exp(-10.0 * r2)

    return PdeProblem(
        operator=Diffusion(),
        forcing=f,
        boundary_data=u,
        domain=domain,
        exact_solution=u,
        problem_id="centroid2d",
    )


# ------------------------------------------------------------ post-processing

def post_process_boundary_1d(
    bundle: AnsatzBundle, operator: Operator, new_extension: ClosedFormSurrogate
) -> AnsatzBundle:
    """Swap the boundary extension after training, without retraining.

    Valid whenever L annihilates the new extension: constants for the
    first-order advection operator, constants or affine functions for
    diffusion.  The residual cost is unchanged because L(G) = 0.
    """
    if not isinstance(new_extension, ClosedFormSurrogate):
        raise ValueError("post-processing requires a closed-form extension")
    allowed = ("constant",) if isinstance(operator, Advection) else ("constant", "affine")
    if new_extension.form not in allowed:
        raise ValueError(
            f"{new_extension.form!r} extension is not in the kernel of the operator"
        )
    return replace(bundle, extension=new_extension)
