"""Derivative propagation through feedforward networks.

Everything the residual training loop needs is computed from one forward
pass and a family of layer-by-layer recursions, with no per-parameter or
per-input repetition:

* spatial Jacobian d y^L / d x_i  (:func:`spatial_jacobian`),
* non-mixed second spatials d^2 y^L / d x_i^2  (:func:`spatial_second`),
* parameter gradients d y^L_m / d p  (:func:`output_param_grad`),
* mixed gradients d^2 y^L_m / d x_i d p  (:func:`mixed_param_grad`),
* third-order d^3 y^L_m / d x_i^2 d p  (:func:`second_mixed_param_grad`),
* plain data-fit backpropagation  (:func:`data_fit_backprop`).

The spatial recursions push Jacobian blocks forward through the layers;
the parameter-gradient recursions push per-output errors delta^l backward,
together with their first and second spatial derivatives.  Layer-l blocks
of the x-derivative recursions seed with J(z^1) = W^1 and J2(z^1) = 0.

Correctness here is defined by central finite differences (see the test
suite): the recursions were derived from scratch by differentiating the
forward pass, and every term is validated against an FD oracle.

All arrays are batched over evaluation points (leading axis B).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import (
    ActivationKind,
    ForwardTape,
    Network,
    activation_derivative,
    feedforward,
    param_count,
)

__all__ = [
    "FirstOrderTape",
    "SecondOrderTape",
    "OutputParamGradients",
    "MixedParamGradients",
    "spatial_jacobian",
    "spatial_second",
    "output_param_grad",
    "mixed_param_grad",
    "second_mixed_param_grad",
    "weighted_param_grad",
    "data_fit_backprop",
    "data_fit_cost_grad",
]


def _check_tape(net: Network, tape: ForwardTape):
    if tape.net is not net:
        raise ValueError("tape was produced by a different network")


def _sigma(net: Network, tape: ForwardTape, layer: int, order: int) -> np.ndarray:
    return activation_derivative(net.arch.activation(layer), order, tape.z[layer - 1])


@dataclass
class FirstOrderTape:
    """Per-layer Jacobians of weighted inputs and activations w.r.t. x.

    ``jz[l-1]`` holds J(z^l) with shape (B, size_l, N); ``jy[l]`` holds
    J(y^l) for l = 0..L, with J(y^0) the identity.  Row m of ``jy[L]``
    is the gradient of output m.
    """

    net: Network
    forward: ForwardTape
    jz: list[np.ndarray]
    jy: list[np.ndarray]

    @property
    def output_jacobian(self) -> np.ndarray:
        """J(y^L), shape (B, M, N)."""
        return self.jy[-1]


@dataclass
class SecondOrderTape:
    """Per-layer non-mixed second partials w.r.t. x (same shapes as above)."""

    net: Network
    forward: ForwardTape
    first: FirstOrderTape
    j2z: list[np.ndarray]
    j2y: list[np.ndarray]

    @property
    def output_second(self) -> np.ndarray:
        """d^2 y^L / d x_i^2, shape (B, M, N)."""
        return self.j2y[-1]


def spatial_jacobian(net: Network, tape: ForwardTape) -> FirstOrderTape:
    """Jacobian of every layer w.r.t. the network input.

    Recursion: J(z^l) = W^l J(y^{l-1}),  J(y^l) = sigma'(z^l) * J(z^l),
    seeded with J(z^1) = W^1.
    """
    _check_tape(net, tape)
    B = tape.batch_size
    n_in = net.arch.input_dim
    jy = [np.broadcast_to(np.eye(n_in), (B, n_in, n_in))]
    jz = []
    for l in range(1, net.depth + 1):
        jz_l = np.einsum("jk,bkn->bjn", net.weights[l - 1], jy[l - 1], optimize=True)
        jz.append(jz_l)
        jy.append(_sigma(net, tape, l, 1)[:, :, None] * jz_l)
    return FirstOrderTape(net=net, forward=tape, jz=jz, jy=jy)


def spatial_second(net: Network, tape: ForwardTape, first: FirstOrderTape) -> SecondOrderTape:
    """Non-mixed second spatial derivatives of every layer.

    Recursion: J2(z^l) = W^l J2(y^{l-1}) with
    J2(y^l) = sigma''(z^l) * J(z^l)^2 + sigma'(z^l) * J2(z^l)
    (elementwise squares), seeded with J2(z^1) = 0.
    """
    _check_tape(net, tape)
    if first.forward is not tape:
        raise ValueError("first-order tape does not belong to this forward tape")
    B = tape.batch_size
    n_in = net.arch.input_dim
    j2y = [np.zeros((B, n_in, n_in))]
    j2z = []
    for l in range(1, net.depth + 1):
        j2z_l = np.einsum("jk,bkn->bjn", net.weights[l - 1], j2y[l - 1], optimize=True)
        j2z.append(j2z_l)
        s1 = _sigma(net, tape, l, 1)[:, :, None]
        s2 = _sigma(net, tape, l, 2)[:, :, None]
        j2y.append(s2 * first.jz[l - 1] ** 2 + s1 * j2z_l)
    return SecondOrderTape(net=net, forward=tape, first=first, j2z=j2z, j2y=j2y)


@dataclass
class OutputParamGradients:
    """d y^L_m / d p for one output index m, for every parameter p.

    ``deltas[l-1]`` is delta^l with shape (B, size_l); ``flat`` collects
    all parameter partials in the layer-major flatten order, shape (B, P).
    ``flat`` is None when the gradients were computed with assemble=False
    (recursions only, for batch-contracted consumers).
    """

    net: Network
    forward: ForwardTape
    m: int
    deltas: list[np.ndarray]
    flat: np.ndarray | None


@dataclass
class MixedParamGradients:
    """Spatial derivatives of the parameter gradients.

    ``order`` is 2 for d^2 y^L_m / d x_i d p and 3 for
    d^3 y^L_m / d x_i^2 d p.  ``flat`` has shape (B, N, P) and is None
    under assemble=False; ``ddeltas[l-1]`` holds the matching derivative
    of delta^l, shape (B, size_l, N).
    """

    net: Network
    forward: ForwardTape
    m: int
    order: int
    ddeltas: list[np.ndarray]
    flat: np.ndarray | None


def _flatten_layer_grads(net: Network, gw: list[np.ndarray], gb: list[np.ndarray]) -> np.ndarray:
    # gw[l-1]: (B, ..., size_l, size_{l-1});  gb[l-1]: (B, ..., size_l)
    lead = gb[0].shape[:-1]
    parts = []
    for w, b in zip(gw, gb):
        parts.append(w.reshape(*lead, -1))
        parts.append(b)
    return np.concatenate(parts, axis=-1)


def output_param_grad(
    net: Network, tape: ForwardTape, m: int = 0, assemble: bool = True
) -> OutputParamGradients:
    """Backpropagation with the identity cost: gradients of output m.

    delta^L is sigma'_L(z^L) masked to component m; then
    d y^L_m / d w^l_{jk} = y^{l-1}_k delta^l_j and
    d y^L_m / d b^l_j = delta^l_j.  assemble=False skips the per-point
    flat (B, P) assembly and returns the deltas only.
    """
    _check_tape(net, tape)
    M = net.arch.output_dim
    if not 0 <= m < M:
        raise ValueError(f"output index {m} out of range for {M} outputs")
    L = net.depth
    mask = np.zeros(M)
    mask[m] = 1.0
    deltas: list[np.ndarray] = [None] * L
    deltas[L - 1] = _sigma(net, tape, L, 1) * mask
    for l in range(L - 1, 0, -1):
        back = deltas[l] @ net.weights[l]  # (W^{l+1})^T delta^{l+1}
        deltas[l - 1] = _sigma(net, tape, l, 1) * back
    flat = None
    if assemble:
        gw = [d[:, :, None] * tape.y[l][:, None, :] for l, d in enumerate(deltas)]
        flat = _flatten_layer_grads(net, gw, deltas)
    return OutputParamGradients(
        net=net, forward=tape, m=m, deltas=deltas, flat=flat,
    )


def mixed_param_grad(
    net: Network,
    tape: ForwardTape,
    first: FirstOrderTape,
    param_grads: OutputParamGradients,
    assemble: bool = True,
) -> MixedParamGradients:
    """d^2 y^L_m / d x_i d p, from one extra backward sweep.

    Differentiating the delta recursion w.r.t. x_i gives
    d delta^l_j / d x_i = sigma'(z^l_j) [ (W^{l+1})^T d delta^{l+1} / d x_i ]_j
                        + sigma''(z^l_j) (d z^l_j / d x_i) [ (W^{l+1})^T delta^{l+1} ]_j
    and the weight entries assemble as
    d^2 y / d x_i d w^l_{jk} = (d y^{l-1}_k / d x_i) delta^l_j
                             + y^{l-1}_k (d delta^l_j / d x_i).
    """
    _check_tape(net, tape)
    if first.forward is not tape or param_grads.forward is not tape:
        raise ValueError("tapes do not belong to the same forward pass")
    L = net.depth
    M = net.arch.output_dim
    mask = np.zeros(M)
    mask[param_grads.m] = 1.0
    deltas = param_grads.deltas
    jd: list[np.ndarray] = [None] * L
    jd[L - 1] = (mask * _sigma(net, tape, L, 2))[:, :, None] * first.jz[L - 1]
    for l in range(L - 1, 0, -1):
        W = net.weights[l]
        back1 = np.einsum("kj,bkn->bjn", W, jd[l], optimize=True)
        back0 = deltas[l] @ W
        s1 = _sigma(net, tape, l, 1)[:, :, None]
        s2 = _sigma(net, tape, l, 2)
        jd[l - 1] = s1 * back1 + (s2 * back0)[:, :, None] * first.jz[l - 1]
    flat = None
    if assemble:
        gw = [
            first.jy[l][:, None, :, :] * deltas[l][:, :, None, None]
            + tape.y[l][:, None, :, None] * jd[l][:, :, None, :]
            for l in range(L)
        ]
        # reorder (B, j, k, N) -> (B, N, j, k) so the flat axis is last
        gw = [np.moveaxis(g, 3, 1) for g in gw]
        gb = [np.moveaxis(d, 2, 1) for d in jd]
        flat = _flatten_layer_grads(net, gw, gb)
    return MixedParamGradients(
        net=net, forward=tape, m=param_grads.m, order=2, ddeltas=jd,
        flat=flat,
    )


def second_mixed_param_grad(
    net: Network,
    tape: ForwardTape,
    first: FirstOrderTape,
    second: SecondOrderTape,
    mixed: MixedParamGradients,
    assemble: bool = True,
) -> MixedParamGradients:
    """d^3 y^L_m / d x_i^2 d p, one further backward sweep.

    Differentiating the first-order delta recursion once more in x_i:
    d^2 delta^l / d x_i^2 = sigma'(z^l) * [W^T d^2 delta^{l+1} / d x_i^2]
        + 2 sigma''(z^l) (d z^l / d x_i) * [W^T d delta^{l+1} / d x_i]
        + ( sigma'''(z^l) (d z^l / d x_i)^2
          + sigma''(z^l) d^2 z^l / d x_i^2 ) * [W^T delta^{l+1}]
    with W = W^{l+1} and all products elementwise in j.  Weight entries:
    d^3 y / d x_i^2 d w^l_{jk} = (d^2 y^{l-1}_k / d x_i^2) delta^l_j
        + 2 (d y^{l-1}_k / d x_i)(d delta^l_j / d x_i)
        + y^{l-1}_k (d^2 delta^l_j / d x_i^2).
    """
    _check_tape(net, tape)
    if first.forward is not tape or second.forward is not tape or mixed.forward is not tape:
        raise ValueError("tapes do not belong to the same forward pass")
    if mixed.order != 2:
        raise ValueError("mixed gradients of order 2 required")
    L = net.depth
    M = net.arch.output_dim
    mask = np.zeros(M)
    mask[mixed.m] = 1.0
    # Rebuild delta^l here rather than requiring the OutputParamGradients object.
    deltas: list[np.ndarray] = [None] * L
    deltas[L - 1] = _sigma(net, tape, L, 1) * mask
    for l in range(L - 1, 0, -1):
        deltas[l - 1] = _sigma(net, tape, l, 1) * (deltas[l] @ net.weights[l])
    jd = mixed.ddeltas
    j2d: list[np.ndarray] = [None] * L
    j2d[L - 1] = (mask * _sigma(net, tape, L, 3))[:, :, None] * first.jz[L - 1] ** 2 + (
        mask * _sigma(net, tape, L, 2)
    )[:, :, None] * second.j2z[L - 1]
    for l in range(L - 1, 0, -1):
        W = net.weights[l]
        back2 = np.einsum("kj,bkn->bjn", W, j2d[l], optimize=True)
        back1 = np.einsum("kj,bkn->bjn", W, jd[l], optimize=True)
        back0 = deltas[l] @ W
        s1 = _sigma(net, tape, l, 1)[:, :, None]
        s2 = _sigma(net, tape, l, 2)
        s3 = _sigma(net, tape, l, 3)
        jz = first.jz[l - 1]
        j2d[l - 1] = (
            s1 * back2
            + 2.0 * s2[:, :, None] * jz * back1
            + ((s3[:, :, None] * jz**2 + s2[:, :, None] * second.j2z[l - 1]) * back0[:, :, None])
        )
    flat = None
    if assemble:
        gw = [
            second.j2y[l][:, None, :, :] * deltas[l][:, :, None, None]
            + 2.0 * first.jy[l][:, None, :, :] * jd[l][:, :, None, :]
            + tape.y[l][:, None, :, None] * j2d[l][:, :, None, :]
            for l in range(L)
        ]
        gw = [np.moveaxis(g, 3, 1) for g in gw]
        gb = [np.moveaxis(d, 2, 1) for d in j2d]
        flat = _flatten_layer_grads(net, gw, gb)
    return MixedParamGradients(
        net=net, forward=tape, m=mixed.m, order=3, ddeltas=j2d,
        flat=flat,
    )


def weighted_param_grad(
    net: Network,
    tape: ForwardTape,
    first: FirstOrderTape | None,
    second: SecondOrderTape | None,
    w0: np.ndarray | None,
    w1: np.ndarray | None,
    w2: np.ndarray | None,
    m: int = 0,
) -> np.ndarray:
    """Batch-contracted parameter gradient, shape (P,):

        sum_b w0[b] dy/dp + sum_{b,i} w1[b,i] d2y/dx_i dp
                          + sum_{b,i} w2[b,i] d3y/dx_i^2 dp

    evaluated without materializing the per-point (B, P) or (B, N, P)
    tensors: the weights are folded into the layer assembly, so each
    layer contributes a handful of (B,)-contracted einsums.  Any of the
    weight blocks may be None to drop that term; w1/w2 require the
    matching spatial tapes.  Agrees with contracting the assembled
    ``flat`` tensors to roundoff (property-tested).
    """
    pg = output_param_grad(net, tape, m, assemble=False)
    jd = j2d = None
    if w1 is not None or w2 is not None:
        if first is None:
            raise ValueError("first-order tape required for w1/w2 terms")
        mg = mixed_param_grad(net, tape, first, pg, assemble=False)
        jd = mg.ddeltas
    if w2 is not None:
        if second is None:
            raise ValueError("second-order tape required for w2 terms")
        smg = second_mixed_param_grad(net, tape, first, second, mg, assemble=False)
        j2d = smg.ddeltas
    parts = []
    for l in range(net.depth):
        d = pg.deltas[l]
        # coefficient of y^l_k in the weight-block gradient rows
        a = w0[:, None] * d if w0 is not None else np.zeros_like(d)
        if w1 is not None:
            a = a + np.einsum("bn,bjn->bj", w1, jd[l], optimize=True)
        if w2 is not None:
            a = a + np.einsum("bn,bjn->bj", w2, j2d[l], optimize=True)
        gw = np.einsum("bj,bk->jk", a, tape.y[l], optimize=True)
        # coefficient of delta_j: the spatial derivatives of y^l_k
        bk = None
        if w1 is not None:
            bk = np.einsum("bn,bkn->bk", w1, first.jy[l], optimize=True)
        if w2 is not None:
            b2 = np.einsum("bn,bkn->bk", w2, second.j2y[l], optimize=True)
            bk = b2 if bk is None else bk + b2
        if bk is not None:
            gw = gw + np.einsum("bj,bk->jk", d, bk, optimize=True)
        if w2 is not None:
            # cross term 2 (dy^l_k/dx_i)(d delta_j/dx_i) cannot split over (j, k)
            gw = gw + 2.0 * np.einsum(
                "bn,bjn,bkn->jk", w2, jd[l], first.jy[l], optimize=True
            )
        parts.append((gw, a.sum(axis=0)))
    return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in parts])


def data_fit_backprop(net: Network, tape: ForwardTape, target) -> np.ndarray:
    """Gradient of 1/2 ||y^L - target||^2 w.r.t. all parameters.

    Standard backpropagation seeded with delta^L = (y^L - target) * sigma'_L.
    For a batched tape the per-point gradients are summed.
    """
    _check_tape(net, tape)
    target = np.atleast_2d(np.asarray(target, dtype=float))
    if target.shape[-1] != net.arch.output_dim:
        raise ValueError("target dimension does not match network output")
    L = net.depth
    delta = (tape.output - target) * _sigma(net, tape, L, 1)
    parts = [None] * L
    for l in range(L, 0, -1):
        gw = np.einsum("bj,bk->jk", delta, tape.y[l - 1], optimize=True)
        gb = delta.sum(axis=0)
        parts[l - 1] = (gw, gb)
        if l > 1:
            delta = (delta @ net.weights[l - 1]) * _sigma(net, tape, l - 1, 1)
    return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in parts])


def data_fit_cost_grad(net: Network, x, targets) -> tuple[float, np.ndarray]:
    """Mean-squared data-fit cost 1/2 1/B sum ||y^L - t||^2 and its gradient."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    tape = feedforward(net, x)
    resid = tape.output - targets
    cost = 0.5 * float(np.sum(resid**2)) / x.shape[0]
    grad = data_fit_backprop(net, tape, targets) / x.shape[0]
    return cost, grad
