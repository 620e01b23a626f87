import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collopde.network import (
    ActivationKind,
    Architecture,
    Network,
    activation_derivative,
    feedforward,
    flatten_params,
    init_network,
    load_network,
    param_count,
    param_layout,
    save_network,
    unflatten_params,
)

from .oracles import random_net, rel_err


def test_param_counts_match_reference_table():
    cases = [
        ((2, (120,), 1), 481),
        ((2, (20, 20), 1), 501),
        ((2, (14, 14, 14), 1), 477),
        ((2, (12, 12, 12, 12), 1), 517),
        ((2, (10, 10, 10, 10, 10), 1), 481),
    ]
    for (n, hidden, m), expected in cases:
        assert param_count(Architecture(n, hidden, m)) == expected


def test_init_is_seed_deterministic():
    arch = Architecture(1, (10, 10), 1)
    a = flatten_params(init_network(arch, seed=42))
    b = flatten_params(init_network(arch, seed=42))
    assert np.array_equal(a, b)
    c = flatten_params(init_network(arch, seed=43))
    assert not np.array_equal(a, c)


def test_init_biases_zero_and_weights_in_glorot_range():
    arch = Architecture(3, (8, 5), 2)
    net = init_network(arch, seed=0)
    sizes = arch.layer_sizes
    for l, (W, b) in enumerate(zip(net.weights, net.biases), start=1):
        assert np.all(b == 0.0)
        r = np.sqrt(6.0 / (sizes[l - 1] + sizes[l]))
        assert np.all(np.abs(W) <= r)


def test_feedforward_single_linear_layer():
    # architectures require a hidden layer, so stack two affine maps
    arch = Architecture(1, (1,), 1, hidden_activation=ActivationKind.LINEAR)
    net = Network(arch=arch, weights=[np.array([[2.0]]), np.array([[1.0]])],
                  biases=[np.array([3.0]), np.array([0.0])])
    tape = feedforward(net, [1.0])
    assert tape.output.shape == (1, 1)
    assert tape.output[0, 0] == pytest.approx(5.0, abs=0)


def test_feedforward_sigmoid_at_zero_is_half():
    arch = Architecture(1, (1,), 1)
    net = Network(arch=arch, weights=[np.zeros((1, 1)), np.array([[1.0]])],
                  biases=[np.zeros(1), np.zeros(1)])
    tape = feedforward(net, [0.7])
    assert tape.output[0, 0] == pytest.approx(0.5, abs=1e-15)


def test_feedforward_matches_hand_composition():
    arch = Architecture(1, (2,), 1)
    W1 = np.array([[0.3], [-0.2]])
    b1 = np.array([0.1, 0.05])
    W2 = np.array([[0.7, -0.4]])
    b2 = np.array([0.2])
    net = Network(arch=arch, weights=[W1, W2], biases=[b1, b2])
    x = 0.9
    sig = lambda t: 1.0 / (1.0 + np.exp(-t))
    h = sig(W1[:, 0] * x + b1)
    expected = W2[0, 0] * h[0] + W2[0, 1] * h[1] + b2[0]
    tape = feedforward(net, [x])
    assert abs(tape.output[0, 0] - expected) < 1e-12


def test_feedforward_rejects_wrong_input_dim():
    net = init_network(Architecture(2, (3,), 1), seed=1)
    with pytest.raises(ValueError):
        feedforward(net, [1.0, 2.0, 3.0])


def test_activation_derivative_pinned_values():
    z = np.array([0.0])
    assert activation_derivative(ActivationKind.SIGMOID, 1, z)[0] == pytest.approx(0.25)
    assert np.all(activation_derivative(ActivationKind.LINEAR, 2, np.array([1.0, -3.0])) == 0.0)
    assert activation_derivative(ActivationKind.SIGMOID, 3, z)[0] == pytest.approx(-0.125)


def test_activation_derivative_rejects_bad_order():
    with pytest.raises(ValueError):
        activation_derivative(ActivationKind.SIGMOID, 4, np.array([0.0]))
    with pytest.raises(ValueError):
        activation_derivative(ActivationKind.SIGMOID, -1, np.array([0.0]))


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=20))
def test_sigmoid_derivative_identities(zs):
    z = np.array(zs)
    s = activation_derivative(ActivationKind.SIGMOID, 0, z)
    s1 = activation_derivative(ActivationKind.SIGMOID, 1, z)
    s2 = activation_derivative(ActivationKind.SIGMOID, 2, z)
    s3 = activation_derivative(ActivationKind.SIGMOID, 3, z)
    assert np.allclose(s1, s * (1 - s), rtol=0, atol=1e-12)
    assert np.allclose(s2, s1 * (1 - 2 * s), rtol=0, atol=1e-12)
    assert np.allclose(s3, s2 * (1 - 2 * s) - 2 * s1**2, rtol=0, atol=1e-12)


def test_activation_derivatives_match_finite_differences():
    z = np.linspace(-5, 5, 41)
    h = 1e-6
    for kind in (ActivationKind.SIGMOID, ActivationKind.LINEAR):
        for order in (1, 2, 3):
            lower = activation_derivative(kind, order - 1, z)
            fd = (
                activation_derivative(kind, order - 1, z + h)
                - activation_derivative(kind, order - 1, z - h)
            ) / (2 * h)
            exact = activation_derivative(kind, order, z)
            assert rel_err(exact, fd) < 1e-6, (kind, order)
            assert lower.shape == exact.shape


def test_flatten_round_trip_identity():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        depth = int(rng.integers(1, 4))
        hidden = tuple(int(rng.integers(1, 6)) for _ in range(depth))
        arch = Architecture(int(rng.integers(1, 4)), hidden, int(rng.integers(1, 3)))
        net = random_net(arch, rng)
        theta = flatten_params(net)
        assert theta.size == param_count(arch)
        back = unflatten_params(arch, theta)
        for W, W2 in zip(net.weights, back.weights):
            assert np.array_equal(W, W2)
        for b, b2 in zip(net.biases, back.biases):
            assert np.array_equal(b, b2)


def test_param_layout_slices_tile_the_vector():
    arch = Architecture(2, (4, 3), 1)
    layout = param_layout(arch)
    covered = []
    for w_sl, b_sl in layout:
        covered.extend(range(w_sl.start, w_sl.stop))
        covered.extend(range(b_sl.start, b_sl.stop))
    assert covered == list(range(param_count(arch)))


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_all_linear_network_is_affine(seed):
    rng = np.random.default_rng(seed)
    arch = Architecture(
        2, (3, 4), 2,
        hidden_activation=ActivationKind.LINEAR,
        output_activation=ActivationKind.LINEAR,
    )
    net = random_net(arch, rng)
    A = net.weights[-1]
    for W in reversed(net.weights[:-1]):
        A = A @ W
    x = rng.uniform(-2, 2, (5, 2))
    out = feedforward(net, x).output
    c = out[0] - x[0] @ A.T
    assert np.allclose(out, x @ A.T + c, atol=1e-12)


def test_network_validates_shapes():
    arch = Architecture(2, (3,), 1)
    with pytest.raises(ValueError):
        Network(arch=arch, weights=[np.zeros((3, 2)), np.zeros((1, 2))],
                biases=[np.zeros(3), np.zeros(1)])
    with pytest.raises(ValueError):
        Network(arch=arch, weights=[np.full((3, 2), np.nan), np.zeros((1, 3))],
                biases=[np.zeros(3), np.zeros(1)])


def test_save_load_round_trip_is_bit_exact(tmp_path):
    net = init_network(Architecture(2, (7, 5), 1), seed=99)
    path = tmp_path / "net.json"
    save_network(net, path)
    back = load_network(path)
    assert back.arch == net.arch
    assert np.array_equal(flatten_params(back), flatten_params(net))
    payload = json.loads(path.read_text())
    assert payload["format"] == "collopde-network-v1"


def test_architecture_rejects_invalid():
    with pytest.raises(ValueError):
        Architecture(0, (3,), 1)
    with pytest.raises(ValueError):
        Architecture(1, (), 1)
    with pytest.raises(ValueError):
        Architecture(1, (0,), 1)
