"""Finite-difference validation of the derivative recursions.

The recursions in collopde.derivatives were derived by hand; these tests
define correctness against central finite differences and against naive
componentwise (scalar-loop) reimplementations on small networks.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collopde.derivatives import (
    data_fit_backprop,
    data_fit_cost_grad,
    mixed_param_grad,
    output_param_grad,
    second_mixed_param_grad,
    spatial_jacobian,
    spatial_second,
)
from collopde.network import (
    ActivationKind,
    Architecture,
    Network,
    activation_derivative,
    feedforward,
    flatten_params,
    param_count,
)

from .oracles import (
    H_FIRST,
    H_PARAM,
    H_SECOND,
    H_THIRD,
    fd_jacobian,
    fd_param,
    fd_second_diag,
    random_net,
    random_point,
    rel_err,
)

SIG = ActivationKind.SIGMOID
LIN = ActivationKind.LINEAR


def all_tapes(net, x):
    tape = feedforward(net, x)
    first = spatial_jacobian(net, tape)
    second = spatial_second(net, tape, first)
    pg = output_param_grad(net, tape, 0)
    mg = mixed_param_grad(net, tape, first, pg)
    smg = second_mixed_param_grad(net, tape, first, second, mg)
    return tape, first, second, pg, mg, smg


# ---------------------------------------------------------------- scalar net

def scalar_net(w=0.8, b=-0.3, v=1.7, c=0.4):
    arch = Architecture(1, (1,), 1)
    return Network(
        arch=arch,
        weights=[np.array([[w]]), np.array([[v]])],
        biases=[np.array([b]), np.array([c])],
    ), (w, b, v, c)


def test_scalar_net_closed_forms():
    # y = v*sigmoid(w*x + b) + c; parameters flatten as [w, b, v, c]
    net, (w, b, v, c) = scalar_net()
    x = 0.6
    z = w * x + b
    s = activation_derivative(SIG, 0, np.array([z]))[0]
    s1 = activation_derivative(SIG, 1, np.array([z]))[0]
    s2 = activation_derivative(SIG, 2, np.array([z]))[0]
    s3 = activation_derivative(SIG, 3, np.array([z]))[0]

    tape, first, second, pg, mg, smg = all_tapes(net, [x])

    assert tape.output[0, 0] == pytest.approx(v * s + c, abs=1e-14)
    assert first.output_jacobian[0, 0, 0] == pytest.approx(v * s1 * w, abs=1e-14)
    assert second.output_second[0, 0, 0] == pytest.approx(v * s2 * w**2, abs=1e-14)

    expected_pg = [v * s1 * x, v * s1, s, 1.0]
    assert np.allclose(pg.flat[0], expected_pg, atol=1e-14)

    expected_mg = [v * (s2 * w * x + s1), v * s2 * w, s1 * w, 0.0]
    assert np.allclose(mg.flat[0, 0], expected_mg, atol=1e-14)

    expected_smg = [
        v * (s3 * w**2 * x + 2 * s2 * w),
        v * s3 * w**2,
        s2 * w**2,
        0.0,
    ]
    assert np.allclose(smg.flat[0, 0], expected_smg, atol=1e-14)


# ------------------------------------------------------- linear degeneracies

def linear_net(rng, n=2, hidden=(3, 4), m=2):
    arch = Architecture(n, hidden, m, hidden_activation=LIN, output_activation=LIN)
    return random_net(arch, rng)


def test_all_linear_jacobian_is_weight_product():
    net = linear_net(np.random.default_rng(0))
    A = net.weights[-1]
    for W in reversed(net.weights[:-1]):
        A = A @ W
    x = np.array([[0.3, -1.1], [2.0, 0.5]])
    first = spatial_jacobian(net, feedforward(net, x))
    assert np.allclose(first.output_jacobian, np.broadcast_to(A, (2, *A.shape)), atol=1e-12)


def test_all_linear_second_and_third_orders_vanish():
    net = linear_net(np.random.default_rng(1))
    tape, first, second, pg, mg, smg = all_tapes(net, [[0.7, -0.2]])
    assert np.all(second.output_second == 0.0)
    assert np.all(smg.flat == 0.0)
    # every bias column of the mixed gradients is exactly zero
    from collopde.network import param_layout

    for _, b_sl in param_layout(net.arch):
        assert np.all(mg.flat[:, :, b_sl] == 0.0)


# ------------------------------------------------------------ FD oracle suite

def test_jacobian_matches_fd_on_reference_arch():
    rng = np.random.default_rng(11)
    net = random_net(Architecture(2, (10, 10, 10), 1), rng)
    x = random_point(2, rng)
    fd = fd_jacobian(lambda p: feedforward(net, p).output[0], x, H_FIRST)
    first = spatial_jacobian(net, feedforward(net, x))
    assert rel_err(first.output_jacobian[0], fd) < 1e-6


def test_second_matches_fd_on_deep_net():
    rng = np.random.default_rng(12)
    net = random_net(Architecture(3, (8, 8, 8, 8), 1), rng)
    x = random_point(3, rng)
    fd = fd_second_diag(lambda p: feedforward(net, p).output[0], x, H_SECOND)
    tape = feedforward(net, x)
    second = spatial_second(net, tape, spatial_jacobian(net, tape))
    assert rel_err(second.output_second[0], fd) < 1e-5


def test_param_grad_matches_fd_every_parameter():
    rng = np.random.default_rng(13)
    net = random_net(Architecture(2, (6, 5), 1), rng)
    x = random_point(2, rng)
    fd = fd_param(lambda n2: feedforward(n2, x).output[0, 0], net, H_PARAM)
    pg = output_param_grad(net, feedforward(net, x), 0)
    assert rel_err(pg.flat[0], fd) < 1e-6


def test_mixed_matches_fd_of_jacobian():
    rng = np.random.default_rng(14)
    net = random_net(Architecture(2, (7, 6, 5), 1), rng)
    x = random_point(2, rng)

    def jac_row(n2):
        t2 = feedforward(n2, x)
        return spatial_jacobian(n2, t2).output_jacobian[0, 0]

    fd = fd_param(jac_row, net, H_FIRST)
    tape = feedforward(net, x)
    first = spatial_jacobian(net, tape)
    mg = mixed_param_grad(net, tape, first, output_param_grad(net, tape, 0))
    assert rel_err(mg.flat[0], fd) < 1e-5


def test_second_mixed_matches_fd_of_spatial_second():
    rng = np.random.default_rng(15)
    net = random_net(Architecture(2, (7, 6, 5), 1), rng)
    x = random_point(2, rng)

    def second_row(n2):
        t2 = feedforward(n2, x)
        f2 = spatial_jacobian(n2, t2)
        return spatial_second(n2, t2, f2).output_second[0, 0]

    fd = fd_param(second_row, net, H_THIRD)
    _, _, _, _, _, smg = all_tapes(net, x)
    assert rel_err(smg.flat[0], fd) < 1e-4


def fd_second_via_jacobian(net, x, h=H_FIRST):
    # Differencing the separately FD-validated first-order pass keeps the
    # oracle inside roundoff even when |y| >> |d2y/dx2| on deep nets, where
    # a plain 3-point second difference carries eps*|y|/h^2 noise.
    cols = []
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        jp = spatial_jacobian(net, feedforward(net, xp)).output_jacobian[0][:, i]
        jm = spatial_jacobian(net, feedforward(net, xm)).output_jacobian[0][:, i]
        cols.append((jp - jm) / (2 * h))
    return np.stack(cols, axis=-1)


def test_oracle_equivalence_sweep():
    # >=100 random (net, x) pairs spanning depths 1..5 and widths 2..20;
    # parameter-indexed oracles are subsampled to keep the sweep quick.
    rng = np.random.default_rng(2024)
    for trial in range(100):
        depth = 1 + trial % 5
        hidden = tuple(int(rng.integers(2, 21)) for _ in range(depth))
        n = int(rng.integers(1, 4))
        m_out = int(rng.integers(1, 3))
        arch = Architecture(n, hidden, m_out)
        net = random_net(arch, rng)
        x = random_point(n, rng)
        m = int(rng.integers(0, m_out))

        tape = feedforward(net, x)
        first = spatial_jacobian(net, tape)
        second = spatial_second(net, tape, first)
        pg = output_param_grad(net, tape, m)
        mg = mixed_param_grad(net, tape, first, pg)
        smg = second_mixed_param_grad(net, tape, first, second, mg)

        fd1 = fd_jacobian(lambda p: feedforward(net, p).output[0], x, H_FIRST)
        assert rel_err(first.output_jacobian[0], fd1) < 1e-6, (trial, arch)
        fd2 = fd_second_via_jacobian(net, x)
        assert rel_err(second.output_second[0], fd2) < 1e-5, (trial, arch)

        P = param_count(arch)
        idx = rng.choice(P, size=min(8, P), replace=False)
        fd0 = fd_param(lambda n2: feedforward(n2, x).output[0, m], net, H_FIRST, idx)
        assert rel_err(pg.flat[0][idx], fd0) < 1e-6, (trial, arch)

        def jac_row(n2):
            t2 = feedforward(n2, x)
            return spatial_jacobian(n2, t2).output_jacobian[0, m]

        fdm = fd_param(jac_row, net, H_FIRST, idx)
        assert rel_err(mg.flat[0][:, idx], fdm) < 1e-5, (trial, arch)

        def second_row(n2):
            t2 = feedforward(n2, x)
            f2 = spatial_jacobian(n2, t2)
            return spatial_second(n2, t2, f2).output_second[0, m]

        fds = fd_param(second_row, net, H_THIRD, idx)
        assert rel_err(smg.flat[0][:, idx], fds) < 1e-4, (trial, arch)


# ------------------------------------------------- componentwise references

def naive_spatial(net, x):
    """Scalar-loop reference for y, dy/dx_i, d2y/dx_i2 at one point."""
    sizes = net.arch.layer_sizes
    N = sizes[0]
    y = np.asarray(x, dtype=float)
    jy = np.eye(N)
    j2y = np.zeros((N, N))
    for l in range(1, len(sizes)):
        W, b = net.weights[l - 1], net.biases[l - 1]
        nl, prev = sizes[l], sizes[l - 1]
        z = np.empty(nl)
        jz = np.empty((nl, N))
        j2z = np.empty((nl, N))
        for j in range(nl):
            z[j] = sum(W[j, k] * y[k] for k in range(prev)) + b[j]
            for i in range(N):
                jz[j, i] = sum(W[j, k] * jy[k, i] for k in range(prev))
                j2z[j, i] = sum(W[j, k] * j2y[k, i] for k in range(prev))
        kind = net.arch.activation(l)
        s1 = activation_derivative(kind, 1, z)
        s2 = activation_derivative(kind, 2, z)
        y = activation_derivative(kind, 0, z)
        jy = s1[:, None] * jz
        j2y = s2[:, None] * jz**2 + s1[:, None] * j2z
    return y, jy, j2y


def naive_param_grad(net, x, m):
    """Scalar-loop reference for dy_m/dp via explicit delta recursion."""
    sizes = net.arch.layer_sizes
    tape = feedforward(net, x)
    L = net.depth
    zs = [tape.z[l][0] for l in range(L)]
    ys = [tape.y[l][0] for l in range(L + 1)]
    deltas = [np.zeros(sizes[l + 1]) for l in range(L)]
    sL = activation_derivative(net.arch.activation(L), 1, zs[L - 1])
    deltas[L - 1][m] = sL[m]
    for l in range(L - 1, 0, -1):
        s = activation_derivative(net.arch.activation(l), 1, zs[l - 1])
        for j in range(sizes[l]):
            deltas[l - 1][j] = s[j] * sum(
                net.weights[l][k, j] * deltas[l][k] for k in range(sizes[l + 1])
            )
    parts = []
    for l in range(1, L + 1):
        gw = np.empty((sizes[l], sizes[l - 1]))
        for j in range(sizes[l]):
            for k in range(sizes[l - 1]):
                gw[j, k] = ys[l - 1][k] * deltas[l - 1][j]
        parts.append(gw.ravel())
        parts.append(deltas[l - 1].copy())
    return np.concatenate(parts)


def test_matrix_form_agrees_with_componentwise_reference():
    rng = np.random.default_rng(21)
    for _ in range(5):
        arch = Architecture(2, (4, 3), 2)
        net = random_net(arch, rng)
        x = random_point(2, rng)
        y_ref, jy_ref, j2y_ref = naive_spatial(net, x)
        tape = feedforward(net, x)
        first = spatial_jacobian(net, tape)
        second = spatial_second(net, tape, first)
        assert rel_err(tape.output[0], y_ref) < 1e-12
        assert rel_err(first.output_jacobian[0], jy_ref) < 1e-12
        assert rel_err(second.output_second[0], j2y_ref) < 1e-12
        for m in range(2):
            pg = output_param_grad(net, tape, m)
            assert rel_err(pg.flat[0], naive_param_grad(net, x, m)) < 1e-12


# ------------------------------------------------------------- batching, API

def test_batched_results_match_per_point_loop():
    rng = np.random.default_rng(31)
    net = random_net(Architecture(2, (6, 5), 1), rng)
    xs = rng.uniform(-1.5, 1.5, (5, 2))
    tape, first, second, pg, mg, smg = all_tapes(net, xs)
    # BLAS may reorder sums between batched and single-point shapes, so
    # equality holds to the last few ulps rather than bit-exactly.
    close = lambda a, b: np.allclose(a, b, rtol=1e-13, atol=1e-15)
    for b in range(5):
        t1, f1, s1, p1, m1, sm1 = all_tapes(net, xs[b])
        assert close(tape.output[b], t1.output[0])
        assert close(first.output_jacobian[b], f1.output_jacobian[0])
        assert close(second.output_second[b], s1.output_second[0])
        assert close(pg.flat[b], p1.flat[0])
        assert close(mg.flat[b], m1.flat[0])
        assert close(smg.flat[b], sm1.flat[0])


def test_flat_shapes():
    net = random_net(Architecture(3, (4, 4), 2), np.random.default_rng(41))
    xs = np.zeros((7, 3))
    tape, first, second, pg, mg, smg = all_tapes(net, xs)
    P = param_count(net.arch)
    assert first.output_jacobian.shape == (7, 2, 3)
    assert second.output_second.shape == (7, 2, 3)
    assert pg.flat.shape == (7, P)
    assert mg.flat.shape == (7, 3, P)
    assert smg.flat.shape == (7, 3, P)


def test_tape_mismatch_raises():
    rng = np.random.default_rng(51)
    net = random_net(Architecture(1, (3,), 1), rng)
    other = random_net(Architecture(1, (3,), 1), rng)
    tape = feedforward(net, [0.2])
    with pytest.raises(ValueError):
        spatial_jacobian(other, tape)
    first = spatial_jacobian(net, tape)
    other_tape = feedforward(net, [0.3])
    with pytest.raises(ValueError):
        spatial_second(net, other_tape, first)


def test_output_param_grad_rejects_bad_index():
    net = random_net(Architecture(1, (3,), 1), np.random.default_rng(0))
    tape = feedforward(net, [0.1])
    with pytest.raises(ValueError):
        output_param_grad(net, tape, 1)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_jacobian_fd_property(seed):
    rng = np.random.default_rng(seed)
    depth = int(rng.integers(1, 4))
    arch = Architecture(2, tuple(int(rng.integers(2, 9)) for _ in range(depth)), 1)
    net = random_net(arch, rng)
    x = random_point(2, rng)
    fd = fd_jacobian(lambda p: feedforward(net, p).output[0], x, H_FIRST)
    first = spatial_jacobian(net, feedforward(net, x))
    assert rel_err(first.output_jacobian[0], fd) < 1e-6


# ------------------------------------------------------------------ data fit

def test_data_fit_zero_residual_zero_gradient():
    net = random_net(Architecture(2, (4,), 1), np.random.default_rng(61))
    tape = feedforward(net, [0.4, -0.9])
    grad = data_fit_backprop(net, tape, tape.output[0])
    assert np.all(grad == 0.0)


def test_data_fit_linear_neuron_bias_gradient():
    arch = Architecture(1, (1,), 1, hidden_activation=LIN)
    net = Network(
        arch=arch,
        weights=[np.array([[2.0]]), np.array([[1.0]])],
        biases=[np.array([0.5]), np.array([0.0])],
    )
    tape = feedforward(net, [1.0])  # y = 2.5
    grad = data_fit_backprop(net, tape, [1.0])
    # flatten order [w1, b1, w2, b2]; both bias entries carry y - t
    assert grad[1] == pytest.approx(1.5, abs=1e-14)
    assert grad[3] == pytest.approx(1.5, abs=1e-14)


def test_data_fit_gradient_matches_fd():
    rng = np.random.default_rng(62)
    net = random_net(Architecture(2, (6, 5), 2), rng)
    xs = rng.uniform(-1, 1, (4, 2))
    ts = rng.uniform(-1, 1, (4, 2))

    cost, grad = data_fit_cost_grad(net, xs, ts)

    def cost_of(n2):
        out = feedforward(n2, xs).output
        return 0.5 * np.sum((out - ts) ** 2) / 4

    fd = fd_param(cost_of, net, H_PARAM)
    assert rel_err(grad, fd) < 1e-6
    assert cost == pytest.approx(cost_of(net))


def test_data_fit_rejects_dimension_mismatch():
    net = random_net(Architecture(1, (3,), 2), np.random.default_rng(0))
    tape = feedforward(net, [0.1])
    with pytest.raises(ValueError):
        data_fit_backprop(net, tape, [1.0])
