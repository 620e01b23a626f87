"""Fully connected feedforward networks with an explicit evaluation tape.

A network maps R^N -> R^M through L layers: layer 0 is the input, layers
1..L-1 are sigmoid hidden layers and layer L is the (by default linear)
output layer.  Evaluation records every pre-activation z^l and activation
y^l so that the derivative propagation in :mod:`collopde.derivatives` can
reuse them without re-running the forward pass.

All arithmetic is float64: the third-order derivative chains lose too much
precision in float32 to survive finite-difference checking.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "ActivationKind",
    "Architecture",
    "Network",
    "ForwardTape",
    "activation_derivative",
    "param_count",
    "init_network",
    "feedforward",
    "flatten_params",
    "unflatten_params",
    "param_layout",
    "save_network",
    "load_network",
]


class ActivationKind(str, Enum):
    SIGMOID = "sigmoid"
    LINEAR = "linear"


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # Branch on sign to avoid overflow in exp for large |z|.
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def activation_derivative(kind: ActivationKind, order: int, z: np.ndarray) -> np.ndarray:
    """Elementwise derivative of order 0..3 of the activation at ``z``.

    Sigmoid derivatives use the closed-form identities s' = s(1 - s),
    s'' = s'(1 - 2s) and s''' = s''(1 - 2s) - 2(s')^2.
    """
    z = np.asarray(z, dtype=float)
    if order not in (0, 1, 2, 3):
        raise ValueError(f"unsupported derivative order {order!r}")
    kind = ActivationKind(kind)
    if kind is ActivationKind.LINEAR:
        if order == 0:
            return np.array(z, copy=True)
        if order == 1:
            return np.ones_like(z)
        return np.zeros_like(z)
    s = _sigmoid(z)
    if order == 0:
        return s
    s1 = s * (1.0 - s)
    if order == 1:
        return s1
    s2 = s1 * (1.0 - 2.0 * s)
    if order == 2:
        return s2
    return s2 * (1.0 - 2.0 * s) - 2.0 * s1 * s1


@dataclass(frozen=True)
class Architecture:
    """Layer sizes and activation kinds of a fully connected network."""

    input_dim: int
    hidden_sizes: tuple[int, ...]
    output_dim: int = 1
    hidden_activation: ActivationKind = ActivationKind.SIGMOID
    output_activation: ActivationKind = ActivationKind.LINEAR

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be >= 1")
        if len(self.hidden_sizes) < 1:
            raise ValueError("at least one hidden layer is required")
        if any(h < 1 for h in self.hidden_sizes):
            raise ValueError("hidden layer sizes must be >= 1")
        object.__setattr__(
            self,
            "hidden_activation",
            ActivationKind(self.hidden_activation),
        )
        object.__setattr__(
            self,
            "output_activation",
            ActivationKind(self.output_activation),
        )

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        """Sizes of layers 0..L, layer 0 being the input."""
        return (self.input_dim, *self.hidden_sizes, self.output_dim)

    @property
    def depth(self) -> int:
        """Number of weight layers L (hidden layers plus output)."""
        return len(self.hidden_sizes) + 1

    def activation(self, layer: int) -> ActivationKind:
        """Activation kind of layer ``layer`` in 1..L."""
        if not 1 <= layer <= self.depth:
            raise ValueError(f"layer {layer} out of range 1..{self.depth}")
        return self.output_activation if layer == self.depth else self.hidden_activation


def param_count(arch: Architecture) -> int:
    """Total number of trainable weights and biases."""
    sizes = arch.layer_sizes
    return sum(sizes[l] * (sizes[l - 1] + 1) for l in range(1, len(sizes)))


def param_layout(arch: Architecture) -> list[tuple[slice, slice]]:
    """Per-layer (weight, bias) slices into the flat parameter vector.

    Layer-major order; within a layer the weight matrix comes first in
    row-major order, then the bias vector.
    """
    sizes = arch.layer_sizes
    layout = []
    off = 0
    for l in range(1, len(sizes)):
        nw = sizes[l] * sizes[l - 1]
        layout.append((slice(off, off + nw), slice(off + nw, off + nw + sizes[l])))
        off += nw + sizes[l]
    return layout


@dataclass
class Network:
    """Weights W^l and biases b^l for layers 1..L of ``arch``.

    ``weights[l-1]`` has shape (size_l, size_{l-1}); entry (j, k) connects
    neuron k in layer l-1 to neuron j in layer l.  Treated as immutable
    during evaluation; optimizer updates go through fresh parameter vectors.
    """

    arch: Architecture
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        sizes = self.arch.layer_sizes
        if len(self.weights) != self.arch.depth or len(self.biases) != self.arch.depth:
            raise ValueError("one weight matrix and bias vector per layer expected")
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        for l in range(1, len(sizes)):
            if self.weights[l - 1].shape != (sizes[l], sizes[l - 1]):
                raise ValueError(
                    f"weight matrix {l} has shape {self.weights[l - 1].shape}, "
                    f"expected {(sizes[l], sizes[l - 1])}"
                )
            if self.biases[l - 1].shape != (sizes[l],):
                raise ValueError(f"bias vector {l} has wrong shape")
        if not all(np.all(np.isfinite(w)) for w in self.weights) or not all(
            np.all(np.isfinite(b)) for b in self.biases
        ):
            raise ValueError("network parameters must be finite")

    @property
    def depth(self) -> int:
        return self.arch.depth

    def evaluate(self, x) -> np.ndarray:
        """Network output; convenience wrapper around :func:`feedforward`."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        out = feedforward(self, x).output
        return out[0] if single else out


@dataclass
class ForwardTape:
    """Record of one forward pass: inputs, weighted inputs and activations.

    All arrays are batched: ``x`` has shape (B, N), ``z[l-1]`` and
    ``y[l]`` have shape (B, size_l).  ``y[0]`` is the input itself.
    """

    net: Network
    x: np.ndarray
    z: list[np.ndarray]
    y: list[np.ndarray]

    @property
    def batch_size(self) -> int:
        return self.x.shape[0]

    @property
    def output(self) -> np.ndarray:
        """Network output y^L, shape (B, M)."""
        return self.y[-1]


def init_network(arch: Architecture, seed: int) -> Network:
    """Seed-deterministic Glorot-uniform weights, zero biases.

    Each W^l is drawn uniformly from [-r, r] with r = sqrt(6/(fan_in+fan_out)),
    which keeps sigmoid pre-activations away from the saturated tails.
    """
    rng = np.random.default_rng(seed)
    sizes = arch.layer_sizes
    weights, biases = [], []
    for l in range(1, len(sizes)):
        fan_in, fan_out = sizes[l - 1], sizes[l]
        r = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-r, r, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Network(arch, weights, biases)


def feedforward(net: Network, x) -> ForwardTape:
    """Forward pass recording z^l and y^l for every layer.

    ``x`` may be a single point of shape (N,) or a batch of shape (B, N).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != net.arch.input_dim:
        raise ValueError(
            f"input has dimension {x.shape[1]}, network expects {net.arch.input_dim}"
        )
    zs: list[np.ndarray] = []
    ys: list[np.ndarray] = [x]
    for l in range(1, net.depth + 1):
        z = ys[-1] @ net.weights[l - 1].T + net.biases[l - 1]
        zs.append(z)
        ys.append(activation_derivative(net.arch.activation(l), 0, z))
    return ForwardTape(net=net, x=x, z=zs, y=ys)


def flatten_params(net: Network) -> np.ndarray:
    """Flat parameter vector in the documented layer-major order."""
    parts = []
    for w, b in zip(net.weights, net.biases):
        parts.append(w.ravel())
        parts.append(b)
    return np.concatenate(parts)


def unflatten_params(arch: Architecture, vec: np.ndarray) -> Network:
    """Rebuild a network from a flat parameter vector (inverse of flatten)."""
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (param_count(arch),):
        raise ValueError(
            f"parameter vector has length {vec.shape}, expected {param_count(arch)}"
        )
    sizes = arch.layer_sizes
    weights, biases = [], []
    for (wsl, bsl), l in zip(param_layout(arch), range(1, len(sizes))):
        weights.append(vec[wsl].reshape(sizes[l], sizes[l - 1]).copy())
        biases.append(vec[bsl].copy())
    return Network(arch, weights, biases)


def save_network(net: Network, path) -> None:
    """Write the network as self-describing JSON with full-precision floats."""
    doc = {
        "format": "collopde-network-v1",
        "input_dim": net.arch.input_dim,
        "hidden_sizes": list(net.arch.hidden_sizes),
        "output_dim": net.arch.output_dim,
        "hidden_activation": net.arch.hidden_activation.value,
        "output_activation": net.arch.output_activation.value,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }
    Path(path).write_text(json.dumps(doc))


def load_network(path) -> Network:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "collopde-network-v1":
        raise ValueError(f"{path}: not a collopde network file")
    arch = Architecture(
        input_dim=doc["input_dim"],
        hidden_sizes=tuple(doc["hidden_sizes"]),
        output_dim=doc["output_dim"],
        hidden_activation=ActivationKind(doc["hidden_activation"]),
        output_activation=ActivationKind(doc["output_activation"]),
    )
    return Network(
        arch,
        [np.array(w, dtype=float) for w in doc["weights"]],
        [np.array(b, dtype=float) for b in doc["biases"]],
    )
