"""Finite-difference oracles and random-network factories for the test suite.

Central differences throughout; step sizes trade truncation against
roundoff in float64 (1e-5 for first derivatives, 1e-4 for second, 1e-3
when differentiating already-differentiated quantities).  Comparisons use
a relative max-norm error with an absolute floor so near-zero arrays do
not produce spurious blowups.
"""

import numpy as np

from collopde.network import Architecture, Network, flatten_params, unflatten_params

H_FIRST = 1e-5
H_SECOND = 1e-4
H_THIRD = 1e-3
H_PARAM = 1e-6


def rel_err(a, b, floor=1e-10):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(b), initial=0.0), floor)
    return float(np.max(np.abs(a - b), initial=0.0)) / scale


def fd_jacobian(f, x, h=H_FIRST):
    """Central-difference derivative of f over each component of x.

    f maps a point (n,) to an array of any shape S; returns shape S + (n,).
    """
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        cols.append((np.asarray(f(xp), dtype=float) - np.asarray(f(xm), dtype=float)) / (2 * h))
    return np.stack(cols, axis=-1)


def fd_second_diag(f, x, h=H_SECOND):
    """Non-mixed second differences [f(x+he_i) - 2f(x) + f(x-he_i)]/h^2."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(f(x), dtype=float)
    cols = []
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        cols.append(
            (np.asarray(f(xp), dtype=float) - 2 * f0 + np.asarray(f(xm), dtype=float)) / h**2
        )
    return np.stack(cols, axis=-1)


def fd_param(f, net, h=H_PARAM, idx=None):
    """Central differences of f(net) over flat parameters.

    f maps a Network to an array of shape S; returns S + (len(idx),),
    columns in the order of ``idx`` (all parameters when idx is None).
    """
    theta = flatten_params(net)
    if idx is None:
        idx = range(theta.size)
    cols = []
    for i in idx:
        tp = theta.copy()
        tm = theta.copy()
        tp[i] += h
        tm[i] -= h
        fp = np.asarray(f(unflatten_params(net.arch, tp)), dtype=float)
        fm = np.asarray(f(unflatten_params(net.arch, tm)), dtype=float)
        cols.append((fp - fm) / (2 * h))
    return np.stack(cols, axis=-1)


def random_net(arch: Architecture, rng: np.random.Generator) -> Network:
    """Network with order-one random parameters.

    Uniform weights in [-1.5, 1.5] and biases in [-0.5, 0.5] keep the
    sigmoids away from saturation so second and third derivatives stay
    well scaled for relative-error FD comparisons.
    """
    sizes = arch.layer_sizes
    weights = [rng.uniform(-1.5, 1.5, (sizes[l], sizes[l - 1])) for l in range(1, len(sizes))]
    biases = [rng.uniform(-0.5, 0.5, sizes[l]) for l in range(1, len(sizes))]
    return Network(arch=arch, weights=weights, biases=biases)


def random_point(dim: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-1.5, 1.5, dim)
