"""BFGS with a strong-Wolfe line search and an SGD escape loop.

Quasi-Newton training drives all experiments.  When the line search fails,
which happens once the inverse-Hessian approximation goes bad, the
optimizer takes a fixed number of tiny stochastic-gradient steps (1000 at
learning rate 1e-9 by default) to move off the bad point, resets the
inverse-Hessian to the identity, and restarts BFGS.  The whole
history is recorded step by step so convergence plots can be produced
from the CSV export.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = [
    "OptimizerOptions",
    "SgdFallbackOptions",
    "OptimizerStatus",
    "ConvergenceHistory",
    "OptimizeResult",
    "wolfe_line_search",
    "bfgs_minimize",
    "sgd_steps",
    "hybrid_minimize",
]


class OptimizerStatus(str, Enum):
    CONVERGED_COST = "converged-by-cost"
    CONVERGED_GRADIENT = "converged-by-gradient"
    LINE_SEARCH_FAILED = "line-search-failed"
    MAX_ITERATIONS = "max-iterations"


@dataclass
class SgdFallbackOptions:
    steps: int = 1000
    learning_rate: float = 1e-9
    batch_size: int | None = 32  # None = full batch

    def __post_init__(self):
        if self.steps < 0 or self.learning_rate < 0:
            raise ValueError("fallback steps and learning rate must be >= 0")


@dataclass
class OptimizerOptions:
    max_iterations: int = 20000
    cost_tolerance: float = 1e-5
    gradient_tolerance: float = 1e-12
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    sgd_fallback: SgdFallbackOptions = field(default_factory=SgdFallbackOptions)
    max_fallback_rounds: int = 50
    debug_checks: bool = False

    def __post_init__(self):
        if not 0 < self.wolfe_c1 < self.wolfe_c2 < 1:
            raise ValueError("need 0 < c1 < c2 < 1")
        if self.cost_tolerance <= 0 or self.gradient_tolerance <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class ConvergenceHistory:
    """Per-step record of the optimization run."""

    cost: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    step_type: list[str] = field(default_factory=list)
    wall_time: list[float] = field(default_factory=list)
    failure_iterations: list[int] = field(default_factory=list)

    def record(self, cost: float, grad_norm: float, step_type: str, wall: float):
        self.cost.append(float(cost))
        self.grad_norm.append(float(grad_norm))
        self.step_type.append(step_type)
        self.wall_time.append(float(wall))

    def extend(self, other: "ConvergenceHistory"):
        offset = len(self.cost)
        self.cost.extend(other.cost)
        self.grad_norm.extend(other.grad_norm)
        self.step_type.extend(other.step_type)
        self.wall_time.extend(other.wall_time)
        self.failure_iterations.extend(i + offset for i in other.failure_iterations)

    @property
    def bfgs_iterations(self) -> int:
        return sum(1 for t in self.step_type if t == "bfgs")

    @property
    def first_failure(self) -> int | None:
        return self.failure_iterations[0] if self.failure_iterations else None

    def __len__(self) -> int:
        return len(self.cost)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "cost", "grad_norm", "step_type", "wall_time"])
            for i, (c, g, t, wt) in enumerate(
                zip(self.cost, self.grad_norm, self.step_type, self.wall_time)
            ):
                w.writerow([i, repr(c), repr(g), t, repr(wt)])


@dataclass
class OptimizeResult:
    x: np.ndarray
    history: ConvergenceHistory
    status: OptimizerStatus

    @property
    def cost(self) -> float:
        return self.history.cost[-1] if len(self.history) else np.nan


# -------------------------------------------------------------- line search

def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimizer of the cubic interpolant; None if degenerate."""
    d1 = ga + gb - 3 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(disc)
    denom = gb - ga + 2 * d2
    if denom == 0:
        return None
    t = b - (b - a) * (gb + d2 - d1) / denom
    return t if np.isfinite(t) else None


def wolfe_line_search(
    phi,
    dphi,
    alpha0: float = 1.0,
    c1: float = 1e-4,
    c2: float = 0.9,
    max_expansions: int = 20,
    max_zoom: int = 30,
):
    """Strong Wolfe bracket-and-zoom search on the 1D restriction phi.

    Returns (alpha, True) on success or (None, False) on failure, which
    includes non-descent directions and non-finite landscapes that the
    zoom budget cannot resolve.
    """
    phi0 = phi(0.0)
    g0 = dphi(0.0)
    if not np.isfinite(phi0) or not np.isfinite(g0) or g0 >= 0:
        return None, False

    def finite_or_inf(v):
        return v if np.isfinite(v) else np.inf

    def zoom(lo, phi_lo, g_lo, hi, phi_hi, g_hi):
        for _ in range(max_zoom):
            t = None
            # secant on phi' is exact for quadratics and immune to the
            # cancellation that hits function-value interpolation near
            # convergence; fall back to cubic, then bisection
            if np.isfinite(g_hi) and g_hi != g_lo:
                t = lo - g_lo * (hi - lo) / (g_hi - g_lo)
            if t is None and np.isfinite(phi_hi):
                t = _cubic_min(lo, phi_lo, g_lo, hi, phi_hi, g_hi)
            span = abs(hi - lo)
            if (
                t is None
                or not (min(lo, hi) < t < max(lo, hi))
                or abs(t - lo) < 1e-3 * span
                or abs(t - hi) < 1e-3 * span
            ):
                t = 0.5 * (lo + hi)
            phit = finite_or_inf(phi(t))
            if phit > phi0 + c1 * t * g0 or phit >= phi_lo:
                hi, phi_hi, g_hi = t, phit, np.nan
            else:
                gt = dphi(t)
                if abs(gt) <= -c2 * g0:
                    return t, True
                if gt * (hi - lo) >= 0:
                    hi, phi_hi, g_hi = lo, phi_lo, g_lo
                lo, phi_lo, g_lo = t, phit, gt
            if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
                break
        return None, False

    alpha_prev, phi_prev, g_prev = 0.0, phi0, g0
    alpha = alpha0
    for i in range(max_expansions):
        phia = finite_or_inf(phi(alpha))
        if phia > phi0 + c1 * alpha * g0 or (phia >= phi_prev and i > 0):
            return zoom(alpha_prev, phi_prev, g_prev, alpha, phia, np.nan)
        ga = dphi(alpha)
        if abs(ga) <= -c2 * g0:
            return alpha, True
        if ga >= 0:
            return zoom(alpha, phia, ga, alpha_prev, phi_prev, g_prev)
        alpha_prev, phi_prev, g_prev = alpha, phia, ga
        alpha *= 2.0
    return None, False


# --------------------------------------------------------------------- BFGS

def _bfgs_loop(cost, grad, x0, opts: OptimizerOptions, history: ConvergenceHistory,
               max_iters: int):
    # each history row is the state at iteration entry, so the sequence
    # starts at the initial cost and never duplicates values
    x = np.asarray(x0, dtype=float).copy()
    f = float(cost(x))
    g = np.asarray(grad(x), dtype=float)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise ValueError("non-finite cost or gradient at the starting point")
    n = x.size
    # H stays at the identity until curvature pairs reshape it; rescaling it
    # from the first (s, y) pair looks textbook but collapses every direction
    # to the stiffest one's scale on these landscapes and costs thousands of
    # iterations to undo
    H = np.eye(n)
    t_prev = time.perf_counter()
    for it in range(max_iters):
        now = time.perf_counter()
        gnorm = float(np.max(np.abs(g)))
        history.record(f, gnorm, "bfgs", now - t_prev)
        t_prev = now
        if f < opts.cost_tolerance:
            return x, OptimizerStatus.CONVERGED_COST
        if gnorm < opts.gradient_tolerance:
            return x, OptimizerStatus.CONVERGED_GRADIENT
        p = -H @ g
        g_dot_p = float(g @ p)

        cache = {}

        def phi(a):
            if a not in cache:
                cache[a] = float(cost(x + a * p))
            return cache[a]

        grads = {}

        def dphi(a):
            if a not in grads:
                grads[a] = np.asarray(grad(x + a * p), dtype=float)
            return float(grads[a] @ p)

        cache[0.0] = f
        grads[0.0] = g
        alpha, ok = wolfe_line_search(phi, dphi, 1.0, opts.wolfe_c1, opts.wolfe_c2)
        if not ok:
            return x, OptimizerStatus.LINE_SEARCH_FAILED
        if opts.debug_checks:
            assert phi(alpha) <= phi(0.0) + opts.wolfe_c1 * alpha * g_dot_p + 1e-12
            assert abs(dphi(alpha)) <= -opts.wolfe_c2 * g_dot_p + 1e-12

        x_new = x + alpha * p
        f_new = phi(alpha)
        g_new = grads.get(alpha)
        if g_new is None:
            g_new = np.asarray(grad(x_new), dtype=float)
        s = x_new - x
        yk = g_new - g
        sy = float(s @ yk)
        if sy > 0:
            rho = 1.0 / sy
            Hy = H @ yk
            # (I - rho s y^T) H (I - rho y s^T) + rho s s^T, expanded
            H = (
                H
                - rho * (np.outer(s, Hy) + np.outer(Hy, s))
                + rho**2 * float(yk @ Hy) * np.outer(s, s)
                + rho * np.outer(s, s)
            )
        x, f, g = x_new, f_new, g_new
    return x, OptimizerStatus.MAX_ITERATIONS


def bfgs_minimize(cost, grad, x0, opts: OptimizerOptions | None = None) -> OptimizeResult:
    """Plain BFGS run; stops at convergence, failure, or the iteration cap."""
    opts = opts or OptimizerOptions()
    history = ConvergenceHistory()
    x, status = _bfgs_loop(cost, grad, x0, opts, history, opts.max_iterations)
    return OptimizeResult(x=x, history=history, status=status)


# ---------------------------------------------------------------------- SGD

def sgd_steps(grad_source, x0, steps: int, lr: float, seed: int = 0,
              cost=None, history: ConvergenceHistory | None = None) -> np.ndarray:
    """Plain gradient steps x <- x - lr * g with seeded batch order.

    grad_source(x, rng) returns a (possibly minibatch) gradient.  When a
    cost callable is given each step is recorded in the history as an
    sgd-fallback step.
    """
    if lr < 0:
        raise ValueError("learning rate must be >= 0")
    x = np.asarray(x0, dtype=float).copy()
    rng = np.random.default_rng(seed)
    for _ in range(steps):
        t0 = time.perf_counter()
        g = np.asarray(grad_source(x, rng), dtype=float)
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite gradient in SGD fallback")
        x -= lr * g
        if history is not None and cost is not None:
            history.record(
                float(cost(x)), float(np.max(np.abs(g))), "sgd-fallback",
                time.perf_counter() - t0,
            )
    return x


# ------------------------------------------------------------------- hybrid

def hybrid_minimize(
    cost,
    grad,
    sgd_grad_source,
    x0,
    opts: OptimizerOptions | None = None,
    seed: int = 0,
) -> OptimizeResult:
    """BFGS with the escape protocol on line-search failure.

    Each failure triggers opts.sgd_fallback.steps SGD steps at the small
    fallback learning rate, after which BFGS restarts from the new point
    with a fresh inverse-Hessian.  Gives up after max_fallback_rounds
    failures or once the BFGS iteration budget is spent.
    """
    opts = opts or OptimizerOptions()
    history = ConvergenceHistory()
    x = np.asarray(x0, dtype=float).copy()
    rounds = 0
    while True:
        remaining = opts.max_iterations - history.bfgs_iterations
        if remaining <= 0:
            return OptimizeResult(x=x, history=history, status=OptimizerStatus.MAX_ITERATIONS)
        x, status = _bfgs_loop(cost, grad, x, opts, history, remaining)
        if status is not OptimizerStatus.LINE_SEARCH_FAILED:
            return OptimizeResult(x=x, history=history, status=status)
        history.failure_iterations.append(len(history) - 1)
        if rounds >= opts.max_fallback_rounds:
            return OptimizeResult(x=x, history=history, status=status)
        x = sgd_steps(
            sgd_grad_source,
            x,
            opts.sgd_fallback.steps,
            opts.sgd_fallback.learning_rate,
            seed=seed + rounds,
            cost=cost,
            history=history,
        )
        rounds += 1
