"""Pipeline orchestration: sample, build surrogates, train, evaluate, export.

A run is: build the problem, sample collocation points, (advection only)
apply the inflow rule, compute the distance field, fit or construct the
two surrogates, initialize the solution network, optionally pre-train it
on the boundary data, minimize the residual cost, and evaluate against
the exact solution when one is available.  Every stage is appended to a
stage log so tests can assert the ordering (the inflow rule must run
before any distance is computed, since moved points get distances too).

All artifacts except recorded wall-clock times are byte-reproducible
from the config: seeds are explicit and every reduction is a fixed-order
numpy sum.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import RunConfig, save_config
from .derivatives import (
    data_fit_cost_grad,
    mixed_param_grad,
    output_param_grad,
    second_mixed_param_grad,
    spatial_jacobian,
    spatial_second,
)
from .geometry import (
    CollocationSet,
    HyperRectangle,
    Interval,
    apply_inflow_rule,
    distance_field,
    domain_dim,
    export_points_csv,
    load_polygon,
    sample_boundary,
    sample_interior,
)
from .network import (
    ActivationKind,
    Architecture,
    Network,
    feedforward,
    flatten_params,
    init_network,
    load_network,
    param_count,
    save_network,
    unflatten_params,
)
from .optimize import (
    ConvergenceHistory,
    OptimizerStatus,
    bfgs_minimize,
    hybrid_minimize,
)
from .problems import (
    Advection,
    AnsatzBundle,
    Diffusion,
    PdeProblem,
    ResidualObjective,
    ansatz_eval,
    manufactured_problem,
)
from .surrogates import (
    ClosedFormSurrogate,
    affine_extension,
    constant_extension,
    interval_distance,
    load_surrogate,
    save_surrogate,
    train_distance,
    train_extension,
)

__all__ = [
    "PipelineError",
    "RunArtifacts",
    "run_solve",
    "write_artifacts",
    "load_run",
    "evaluate_solution",
    "build_eval_grid",
    "run_depth_study",
    "DEPTH_LADDER",
    "run_gradcheck",
    "GradcheckReport",
]

CONVERGED_STATUSES = (OptimizerStatus.CONVERGED_COST, OptimizerStatus.CONVERGED_GRADIENT)

DEPTH_LADDER = (
    (120,),
    (20, 20),
    (14, 14, 14),
    (12, 12, 12, 12),
    (10, 10, 10, 10, 10),
)


class PipelineError(RuntimeError):
    """Failure wrapped with the pipeline stage it happened in."""

    def __init__(self, stage: str, original: BaseException):
        super().__init__(f"[{stage}] {original}")
        self.stage = stage
        self.original = original


class _StageLog:
    def __init__(self):
        self.stages: list[str] = []
        self._t0 = time.perf_counter()
        self.times: list[float] = []

    def enter(self, name: str):
        self.stages.append(name)
        self.times.append(time.perf_counter() - self._t0)

    def run(self, name: str, fn):
        self.enter(name)
        try:
            return fn()
        except PipelineError:
            raise
        except Exception as exc:
            raise PipelineError(name, exc) from exc


@dataclass
class RunArtifacts:
    config: RunConfig
    problem: PdeProblem
    bundle: AnsatzBundle
    history: ConvergenceHistory
    status: OptimizerStatus
    collocation: CollocationSet
    evaluation: dict
    summary: dict
    stage_log: list[str]
    error_checkpoints: list[tuple[int, float]] = field(default_factory=list)
    output_dir: Path | None = None

    @property
    def converged(self) -> bool:
        return self.status in CONVERGED_STATUSES


# --------------------------------------------------------------- stage pieces

def build_problem(config: RunConfig) -> PdeProblem:
    if config.problem == "custom":
        if config.domain_file is None:
            raise ValueError("'custom' problem needs a polygon domain file")
        poly = load_polygon(config.domain_file)
        return manufactured_problem("custom", domain=poly)
    return manufactured_problem(config.problem, dim=config.dim)


def build_collocation(config: RunConfig, problem: PdeProblem) -> CollocationSet:
    pts = config.points
    interior = sample_interior(
        problem.domain, pts.interior, strategy=pts.interior_strategy, seed=pts.seed
    )
    # an interval boundary is just its two endpoints
    n_b = min(pts.boundary, 2) if isinstance(problem.domain, Interval) else pts.boundary
    boundary = sample_boundary(
        problem.domain, n_b, seed=pts.seed + 1, strategy=pts.boundary_strategy
    )
    subset = None
    if pts.distance_subset is not None:
        subset = np.arange(min(pts.distance_subset, len(interior)))
    return CollocationSet(interior=interior, boundary=boundary, distance_subset=subset)


def _interval_auto_surrogates(problem: PdeProblem, cset: CollocationSet):
    dom: Interval = problem.domain
    a, b = dom.a, dom.b
    if isinstance(problem.operator, Advection):
        # only the inflow endpoint carries data
        x0 = float(cset.boundary[0].position[0])
        g0 = float(problem.boundary_data(np.array([[x0]]))[0])
        return constant_extension(g0), interval_distance(x0, b if x0 == a else a, both_ends=False)
    ga = float(problem.boundary_data(np.array([[a]]))[0])
    gb = float(problem.boundary_data(np.array([[b]]))[0])
    slope = (gb - ga) / (b - a)
    return affine_extension(ga - slope * a, [slope]), interval_distance(a, b, both_ends=True)


def _closed_form_from_config(sub) -> ClosedFormSurrogate:
    return ClosedFormSurrogate(form=sub.form, params=dict(sub.params))


def _surrogate_opts(sub):
    from .optimize import OptimizerOptions

    return OptimizerOptions(
        max_iterations=sub.max_iterations, cost_tolerance=1e-10, gradient_tolerance=1e-10
    )


def build_surrogates(config: RunConfig, problem: PdeProblem, cset: CollocationSet, log: _StageLog):
    """Distance field first (it must see the post-inflow boundary), then G and D."""
    dim = domain_dim(problem.domain)
    ext_cfg, dist_cfg = config.extension, config.distance
    auto_closed = isinstance(problem.domain, Interval)

    dist_values = None

    def compute_distances():
        nonlocal dist_values
        needs_training = not (
            dist_cfg.mode == "closed-form" or (dist_cfg.mode == "auto" and auto_closed)
        )
        if needs_training:
            dist_values = distance_field(
                cset.subset_points, cset.boundary_positions, backend=config.distance_backend
            )

    log.run("distance-field", compute_distances)

    def make_extension():
        if ext_cfg.mode == "closed-form":
            return _closed_form_from_config(ext_cfg)
        if ext_cfg.mode == "auto" and auto_closed:
            return _interval_auto_surrogates(problem, cset)[0]
        xb = cset.boundary_positions
        g = problem.boundary_data(xb)
        arch = Architecture(dim, ext_cfg.hidden, 1) if ext_cfg.hidden else None
        return train_extension(xb, g, arch=arch, opts=_surrogate_opts(ext_cfg), seed=ext_cfg.seed)

    def make_distance():
        if dist_cfg.mode == "closed-form":
            return _closed_form_from_config(dist_cfg)
        if dist_cfg.mode == "auto" and auto_closed:
            return _interval_auto_surrogates(problem, cset)[1]
        arch = Architecture(dim, dist_cfg.hidden, 1) if dist_cfg.hidden else None
        return train_distance(
            cset.subset_points,
            dist_values.normalized,
            cset.boundary_positions,
            arch=arch,
            opts=_surrogate_opts(dist_cfg),
            seed=dist_cfg.seed,
            normalization=dist_values.normalization,
        )

    extension = log.run("extension-surrogate", make_extension)
    distance = log.run("distance-surrogate", make_distance)
    return extension, distance


def pretrain_solution(net: Network, cset: CollocationSet, problem: PdeProblem, max_iterations: int) -> Network:
    """Fit the solution net to the boundary data before residual training.

    Only the initial parameters change; points and surrogates are
    untouched.
    """
    from .optimize import OptimizerOptions

    xb = cset.boundary_positions
    targets = np.asarray(problem.boundary_data(xb), dtype=float).reshape(-1, 1)
    arch = net.arch

    def cost(theta):
        return data_fit_cost_grad(unflatten_params(arch, theta), xb, targets)[0]

    def grad(theta):
        return data_fit_cost_grad(unflatten_params(arch, theta), xb, targets)[1]

    opts = OptimizerOptions(
        max_iterations=max_iterations, cost_tolerance=1e-10, gradient_tolerance=1e-10
    )
    res = bfgs_minimize(cost, grad, flatten_params(net), opts)
    return unflatten_params(arch, res.x)


def build_eval_grid(problem: PdeProblem, n_interior: int, n_boundary: int, seed: int) -> np.ndarray:
    """Evaluation points: equidistant incl. endpoints in 1D, sampled otherwise."""
    if isinstance(problem.domain, Interval):
        dom = problem.domain
        return np.linspace(dom.a, dom.b, max(2, n_interior))[:, None]
    pts = sample_interior(problem.domain, n_interior, strategy="uniform-random", seed=seed)
    if n_boundary > 0:
        bps = sample_boundary(problem.domain, n_boundary, seed=seed + 1)
        pts = np.vstack([pts, [bp.position for bp in bps]])
    return pts


def evaluate_solution(bundle: AnsatzBundle, problem: PdeProblem, grid: np.ndarray) -> dict:
    """Per-point u_hat (and error when the exact solution is known)."""
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    u_hat = ansatz_eval(bundle, grid)
    out = {
        "points": grid,
        "u_hat": u_hat,
        "u_exact": None,
        "error": None,
        "max_abs_error": None,
        "mean_abs_error": None,
    }
    if problem.exact_solution is not None:
        u = np.asarray(problem.exact_solution(grid), dtype=float)
        err = u_hat - u
        out.update(
            u_exact=u,
            error=err,
            max_abs_error=float(np.max(np.abs(err))),
            mean_abs_error=float(np.mean(np.abs(err))),
        )
    return out


def write_evaluation_csv(evaluation: dict, path) -> None:
    pts = evaluation["points"]
    cols = [f"x{i + 1}" for i in range(pts.shape[1])] + ["u_hat"]
    data = [pts, evaluation["u_hat"][:, None]]
    if evaluation["error"] is not None:
        cols += ["u_exact", "error"]
        data += [evaluation["u_exact"][:, None], evaluation["error"][:, None]]
    table = np.hstack(data)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in table:
            w.writerow([repr(float(v)) for v in row])


# -------------------------------------------------------------------- solving

def run_solve(config: RunConfig) -> RunArtifacts:
    config.validate()
    log = _StageLog()
    t_start = time.perf_counter()

    problem = log.run("build-problem", lambda: build_problem(config))
    cset = log.run("sample-points", lambda: build_collocation(config, problem))

    if isinstance(problem.operator, Advection):
        cset = log.run(
            "inflow-rule", lambda: apply_inflow_rule(cset, problem.operator.velocity)
        )

    extension, distance = build_surrogates(config, problem, cset, log)

    dim = domain_dim(problem.domain)
    net = log.run(
        "init-solution",
        lambda: init_network(
            Architecture(dim, tuple(config.solution.hidden), 1), config.solution.init_seed
        ),
    )
    arch = net.arch

    if config.pretrain.enabled:
        net = log.run(
            "pretrain",
            lambda: pretrain_solution(net, cset, problem, config.pretrain.max_iterations),
        )

    bundle = AnsatzBundle(extension=extension, distance=distance, solution_net=net)

    checkpoints: list[tuple[int, float]] = []

    def train():
        obj = ResidualObjective(bundle, problem, cset.interior)
        theta0 = flatten_params(net)
        opts = config.optimizer.to_options()

        grad_fn = obj.grad
        every = config.evaluation.checkpoint_every
        if every > 0 and problem.exact_solution is not None:
            grid = build_eval_grid(
                problem, config.evaluation.interior, config.evaluation.boundary,
                config.evaluation.seed,
            )
            u_exact = np.asarray(problem.exact_solution(grid), dtype=float)
            calls = 0

            def grad_fn(theta):
                nonlocal calls
                calls += 1
                if calls % every == 0:
                    probe = replace(bundle, solution_net=unflatten_params(arch, theta))
                    err = float(np.max(np.abs(ansatz_eval(probe, grid) - u_exact)))
                    checkpoints.append((calls, err))
                return obj.grad(theta)

        def sgd_source(theta, rng):
            return obj.sgd_grad(theta, rng, opts.sgd_fallback.batch_size)

        res = hybrid_minimize(
            obj.cost, grad_fn, sgd_source, theta0, opts, seed=config.optimizer.seed
        )
        # the history records states at iteration entry; the returned point
        # can be one step past the last row, so re-evaluate it for the summary
        return res, obj.cost(res.x)

    result, final_cost = log.run("train", train)
    trained = unflatten_params(arch, result.x)
    bundle = replace(bundle, solution_net=trained)

    def evaluate():
        grid = build_eval_grid(
            problem, config.evaluation.interior, config.evaluation.boundary,
            config.evaluation.seed,
        )
        ev = evaluate_solution(bundle, problem, grid)
        if checkpoints and ev["max_abs_error"] is not None:
            checkpoints.append((checkpoints[-1][0] + 1, ev["max_abs_error"]))
        return ev

    evaluation = log.run("evaluate", evaluate)

    summary = {
        "problem": problem.problem_id,
        "status": result.status.value,
        "converged": result.status in CONVERGED_STATUSES,
        "final_cost": final_cost,
        "iterations": len(result.history),
        "bfgs_iterations": result.history.bfgs_iterations,
        "first_failure": result.history.first_failure,
        "n_interior": len(cset.interior),
        "n_boundary": len(cset.boundary),
        "param_count": param_count(arch),
        "max_abs_error": evaluation["max_abs_error"],
        "mean_abs_error": evaluation["mean_abs_error"],
        "pretrained": bool(config.pretrain.enabled),
        "wall_clock_seconds": time.perf_counter() - t_start,
    }

    artifacts = RunArtifacts(
        config=config,
        problem=problem,
        bundle=bundle,
        history=result.history,
        status=result.status,
        collocation=cset,
        evaluation=evaluation,
        summary=summary,
        stage_log=list(log.stages),
        error_checkpoints=checkpoints,
    )
    if config.output_dir:
        log.enter("write-artifacts")
        artifacts.stage_log = list(log.stages)
        write_artifacts(artifacts, config.output_dir)
    return artifacts


def write_artifacts(artifacts: RunArtifacts, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(artifacts.config, out / "config.json")
    save_surrogate(artifacts.bundle.extension, out / "extension.json")
    save_surrogate(artifacts.bundle.distance, out / "distance.json")
    save_network(artifacts.bundle.solution_net, out / "solution.json")
    artifacts.history.to_csv(out / "history.csv")
    export_points_csv(artifacts.collocation.interior, out / "interior.csv")
    export_points_csv(artifacts.collocation.boundary_positions, out / "boundary.csv")
    write_evaluation_csv(artifacts.evaluation, out / "evaluation.csv")
    (out / "stages.txt").write_text("\n".join(artifacts.stage_log) + "\n")
    if artifacts.error_checkpoints:
        with open(out / "checkpoints.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["grad_call", "max_abs_error"])
            for k, e in artifacts.error_checkpoints:
                w.writerow([k, repr(e)])
    (out / "summary.json").write_text(json.dumps(artifacts.summary, indent=1) + "\n")
    artifacts.output_dir = out
    return out


def load_run(out_dir):
    """Reload config, problem, and the trained bundle from a run directory."""
    from .config import load_config

    out = Path(out_dir)
    config = load_config(out / "config.json")
    problem = build_problem(config)
    bundle = AnsatzBundle(
        extension=load_surrogate(out / "extension.json"),
        distance=load_surrogate(out / "distance.json"),
        solution_net=load_network(out / "solution.json"),
    )
    return config, problem, bundle


# ---------------------------------------------------------------- depth study

def run_depth_study(config: RunConfig, depths=DEPTH_LADDER, seeds=(0, 1, 2)) -> list[dict]:
    """Iterations-to-tolerance across architectures of matched parameter count.

    Per-seed point sets are shared across depths so only the architecture
    varies.  A run that exhausts its iteration budget is recorded as
    censored (converged = False) rather than dropped; a run that raises
    is recorded with its error and the study continues.
    """
    rows = []
    for seed in seeds:
        for hidden in depths:
            cfg = replace(
                config,
                solution=replace(config.solution, hidden=tuple(hidden), init_seed=seed),
                points=replace(config.points, seed=seed),
                output_dir=None,
            )
            row = {
                "depth": len(hidden),
                "hidden": "x".join(str(h) for h in hidden),
                "seed": seed,
                "params": None,
                "iterations": None,
                "converged": False,
                "final_cost": None,
                "status": None,
                "error": None,
            }
            try:
                art = run_solve(cfg)
                row.update(
                    params=art.summary["param_count"],
                    iterations=art.history.bfgs_iterations,
                    converged=art.converged,
                    final_cost=art.summary["final_cost"],
                    status=art.summary["status"],
                )
            except Exception as exc:  # study keeps going past individual failures
                row["error"] = str(exc)
            rows.append(row)
    return rows


def write_depth_study_csv(rows: list[dict], path) -> None:
    cols = ["depth", "hidden", "params", "seed", "iterations", "converged", "final_cost", "status", "error"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in rows:
            w.writerow([row[c] for c in cols])


# ------------------------------------------------------------- gradient check

@dataclass
class GradcheckReport:
    rows: list[dict]

    @property
    def all_passed(self) -> bool:
        return all(r["passed"] for r in self.rows)

    def to_csv(self, path) -> None:
        cols = ["quantity", "arch", "trial", "rel_err", "tolerance", "analytic_max_abs", "passed"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for row in self.rows:
                w.writerow([row[c] for c in cols])


def _rel_err(a, b, floor=1e-10):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(b), initial=0.0), floor)
    return float(np.max(np.abs(a - b), initial=0.0)) / scale


def _random_check_net(rng, dim, linear=False) -> Network:
    depth = int(rng.integers(1, 4))
    hidden = tuple(int(rng.integers(2, 9)) for _ in range(depth))
    kw = {"hidden_activation": ActivationKind.LINEAR} if linear else {}
    arch = Architecture(dim, hidden, 1, **kw)
    net = init_network(arch, int(rng.integers(0, 2**31)))
    weights = [rng.uniform(-1.5, 1.5, size=w.shape) for w in net.weights]
    biases = [rng.uniform(-0.5, 0.5, size=b.shape) for b in net.biases]
    return Network(arch, weights, biases)


def _engine_quantities(net: Network, x: np.ndarray, flip_third_sign=False):
    tape = feedforward(net, x)
    first = spatial_jacobian(net, tape)
    second = spatial_second(net, tape, first)
    pg = output_param_grad(net, tape, 0)
    mg = mixed_param_grad(net, tape, first, pg)
    smg = second_mixed_param_grad(net, tape, first, second, mg)
    smg_flat = -smg.flat if flip_third_sign else smg.flat
    return {
        "spatial-jacobian": first.output_jacobian[:, 0, :],
        "spatial-second": second.output_second[:, 0, :],
        "param-grad": pg.flat,
        "mixed-param-grad": mg.flat,
        "second-mixed-param-grad": smg_flat,
    }


_TOLERANCES = {
    "spatial-jacobian": 1e-6,
    "spatial-second": 1e-5,
    "param-grad": 1e-6,
    "mixed-param-grad": 1e-5,
    "second-mixed-param-grad": 1e-4,
    "residual-grad-advection": 1e-5,
    "residual-grad-diffusion": 1e-4,
}


def _fd_engine_quantities(net: Network, x: np.ndarray):
    """FD references: value/jacobian differenced over space and parameters."""
    arch = net.arch
    theta = flatten_params(net)
    B, N = x.shape
    P = theta.size

    def y_at(pts, th=None):
        n = net if th is None else unflatten_params(arch, th)
        return feedforward(n, pts).output[:, 0]

    def jac_at(th):
        n = unflatten_params(arch, th)
        t = feedforward(n, x)
        return spatial_jacobian(n, t).output_jacobian[:, 0, :]

    h1, h2, hp = 1e-5, 1e-4, 1e-6
    fd = {}
    jac = np.empty((B, N))
    sec = np.empty((B, N))
    for i in range(N):
        e = np.zeros(N)
        e[i] = 1.0
        jac[:, i] = (y_at(x + h1 * e) - y_at(x - h1 * e)) / (2 * h1)
        sec[:, i] = (y_at(x + h2 * e) - 2 * y_at(x) + y_at(x - h2 * e)) / h2**2
    fd["spatial-jacobian"] = jac
    fd["spatial-second"] = sec
    pgrad = np.empty((B, P))
    mgrad = np.empty((B, N, P))
    for p in range(P):
        tp, tm = theta.copy(), theta.copy()
        tp[p] += hp
        tm[p] -= hp
        pgrad[:, p] = (y_at(x, tp) - y_at(x, tm)) / (2 * hp)
        tp2, tm2 = theta.copy(), theta.copy()
        tp2[p] += 1e-5
        tm2[p] -= 1e-5
        mgrad[:, :, p] = (jac_at(tp2) - jac_at(tm2)) / (2e-5)
    fd["param-grad"] = pgrad
    fd["mixed-param-grad"] = mgrad

    def sec_at(th):
        n = unflatten_params(arch, th)
        t = feedforward(n, x)
        f = spatial_jacobian(n, t)
        return spatial_second(n, t, f).output_second[:, 0, :]

    smgrad = np.empty((B, N, P))
    for p in range(P):
        tp, tm = theta.copy(), theta.copy()
        tp[p] += 1e-3
        tm[p] -= 1e-3
        smgrad[:, :, p] = (sec_at(tp) - sec_at(tm)) / 2e-3
    fd["second-mixed-param-grad"] = smgrad
    return fd


def _residual_fixture(rng, operator_kind: str):
    dim = int(rng.integers(1, 3))
    net = _random_check_net(rng, dim)
    if operator_kind == "advection":
        a = rng.uniform(-1, 1, size=dim)
        a[0] += 2.0
        op = Advection(a)
    else:
        op = Diffusion()
    c = rng.uniform(-1, 1, size=dim)
    problem = PdeProblem(
        operator=op,
        forcing=lambda x: np.sin(x @ c),
        boundary_data=lambda x: np.zeros(len(x)),
        domain=Interval(0, 1) if dim == 1 else HyperRectangle(np.zeros(dim), np.ones(dim)),
    )
    bundle = AnsatzBundle(
        extension=affine_extension(rng.uniform(-1, 1), rng.uniform(-1, 1, size=dim)),
        distance=affine_extension(0.4, rng.uniform(-0.5, 0.5, size=dim)),
        solution_net=net,
    )
    points = rng.uniform(0.1, 0.9, size=(4, dim))
    return bundle, problem, points


def run_gradcheck(trials: int = 5, seed: int = 0, mutation: str | None = None) -> GradcheckReport:
    """Analytical derivatives vs finite differences on random instances.

    mutation='flip-second-mixed-sign' negates the analytic third-order
    quantity before comparison; the corresponding rows must then fail
    (self-test of the check itself).
    """
    if mutation not in (None, "flip-second-mixed-sign"):
        raise ValueError(f"unknown mutation {mutation!r}")
    rng = np.random.default_rng(seed)
    rows = []
    flip = mutation == "flip-second-mixed-sign"

    for trial in range(trials):
        dim = int(rng.integers(1, 4))
        net = _random_check_net(rng, dim)
        x = rng.uniform(-1.0, 1.0, size=(2, dim))
        analytic = _engine_quantities(net, x, flip_third_sign=flip)
        reference = _fd_engine_quantities(net, x)
        arch_label = f"{dim}-{'x'.join(map(str, net.arch.hidden_sizes))}-1"
        for q, tol in list(_TOLERANCES.items())[:5]:
            err = _rel_err(analytic[q], reference[q])
            rows.append(
                {
                    "quantity": q,
                    "arch": arch_label,
                    "trial": trial,
                    "rel_err": err,
                    "tolerance": tol,
                    "analytic_max_abs": float(np.max(np.abs(analytic[q]))),
                    "passed": err < tol,
                }
            )

    # an all-linear network has identically zero curvature; the analytic
    # second/third-order quantities must vanish exactly, no FD involved
    lin = _random_check_net(rng, 2, linear=True)
    xlin = rng.uniform(-1.0, 1.0, size=(2, 2))
    analytic = _engine_quantities(lin, xlin, flip_third_sign=False)
    for q in ("spatial-second", "second-mixed-param-grad"):
        amax = float(np.max(np.abs(analytic[q])))
        rows.append(
            {
                "quantity": f"{q}-all-linear",
                "arch": f"2-{'x'.join(map(str, lin.arch.hidden_sizes))}-1-linear",
                "trial": 0,
                "rel_err": amax,
                "tolerance": 0.0,
                "analytic_max_abs": amax,
                "passed": amax == 0.0,
            }
        )

    for kind, qname in (("advection", "residual-grad-advection"), ("diffusion", "residual-grad-diffusion")):
        for trial in range(trials):
            bundle, problem, points = _residual_fixture(rng, kind)
            obj = ResidualObjective(bundle, problem, points)
            theta = flatten_params(bundle.solution_net)
            grad = obj.grad(theta)
            idx = rng.choice(theta.size, size=min(8, theta.size), replace=False)
            fd = np.empty(idx.size)
            h = 1e-6
            for j, i in enumerate(idx):
                tp, tm = theta.copy(), theta.copy()
                tp[i] += h
                tm[i] -= h
                fd[j] = (obj.cost(tp) - obj.cost(tm)) / (2 * h)
            err = _rel_err(grad[idx], fd)
            tol = _TOLERANCES[qname]
            rows.append(
                {
                    "quantity": qname,
                    "arch": f"{points.shape[1]}d",
                    "trial": trial,
                    "rel_err": err,
                    "tolerance": tol,
                    "analytic_max_abs": float(np.max(np.abs(grad[idx]))),
                    "passed": err < tol,
                }
            )

    return GradcheckReport(rows=rows)
