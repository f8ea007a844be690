"""Fully connected ReLU networks: forward pass, gradients, serialization.

A :class:`DenseNet` with input dimension t, L hidden layers and widths
(k_1, ..., k_L) computes an affine output over the last hidden layer, with
the ReLU max{u, 0} applied at every hidden neuron and nowhere else.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .rng import RngState


@dataclass
class DenseNet:
    """Weights of one fully connected ReLU network.

    hidden_weights[r] has shape (k_{r+1}, k_r) with k_0 = input_dim;
    hidden_biases[r] has shape (k_{r+1},); out_weights has shape (k_L,).
    Instances are treated as immutable during evaluation; training-time
    mutation requires external exclusivity.
    """

    input_dim: int
    hidden_weights: list[np.ndarray]
    hidden_biases: list[np.ndarray]
    out_weights: np.ndarray
    out_bias: float

    def __post_init__(self):
        if self.input_dim < 1:
            raise ValueError(f"input dimension must be >= 1, got {self.input_dim}")
        if len(self.hidden_weights) != len(self.hidden_biases) or not self.hidden_weights:
            raise ValueError("need equally many weight matrices and bias vectors, >= 1")
        prev = self.input_dim
        for r, (w, b) in enumerate(zip(self.hidden_weights, self.hidden_biases)):
            if w.ndim != 2 or w.shape[1] != prev:
                raise ValueError(
                    f"layer {r + 1} weight shape {w.shape} does not chain "
                    f"from width {prev}"
                )
            if b.shape != (w.shape[0],):
                raise ValueError(
                    f"layer {r + 1} bias shape {b.shape} does not match "
                    f"width {w.shape[0]}"
                )
            prev = w.shape[0]
        if self.out_weights.shape != (prev,):
            raise ValueError(
                f"output weight shape {self.out_weights.shape} does not match "
                f"last width {prev}"
            )
        for arr in self.hidden_weights + self.hidden_biases + [self.out_weights]:
            if not np.all(np.isfinite(arr)):
                raise ValueError("parameters must be finite")

    @property
    def layers(self) -> int:
        return len(self.hidden_weights)

    @property
    def widths(self) -> list[int]:
        return [w.shape[0] for w in self.hidden_weights]

    def __call__(self, *x) -> float:
        if len(x) == 1 and np.ndim(x[0]) >= 1:
            return dense_forward(self, np.asarray(x[0]))
        return dense_forward(self, np.asarray(x, dtype=np.float64))

    def copy(self) -> "DenseNet":
        return DenseNet(
            input_dim=self.input_dim,
            hidden_weights=[w.copy() for w in self.hidden_weights],
            hidden_biases=[b.copy() for b in self.hidden_biases],
            out_weights=self.out_weights.copy(),
            out_bias=float(self.out_bias),
        )

    def param_arrays(self) -> list[np.ndarray]:
        """References to all parameter arrays in canonical order (the scalar
        output bias is exposed as a helper for counting only)."""
        return self.hidden_weights + self.hidden_biases + [self.out_weights]

    def num_params(self) -> int:
        return sum(a.size for a in self.param_arrays()) + 1


@dataclass
class DenseGrads:
    """Gradient bundle mirroring DenseNet's parameter layout."""

    hidden_weights: list[np.ndarray]
    hidden_biases: list[np.ndarray]
    out_weights: np.ndarray
    out_bias: float
    input: np.ndarray


def dense_forward(net: DenseNet, x: np.ndarray, dtype=np.float64) -> float:
    """Scalar output of the network at input x (length input_dim)."""
    a = np.asarray(x, dtype=dtype)
    if a.shape != (net.input_dim,):
        raise ValueError(
            f"input shape {a.shape} does not match input dimension "
            f"{net.input_dim}"
        )
    if not np.all(np.isfinite(a)):
        raise ValueError("input must be finite")
    for w, b in zip(net.hidden_weights, net.hidden_biases):
        a = np.maximum(w.astype(dtype) @ a + b.astype(dtype), 0.0)
    return float(net.out_weights.astype(dtype) @ a + dtype(net.out_bias))


def dense_grad(net: DenseNet, x: np.ndarray, upstream: float = 1.0) -> DenseGrads:
    """Reverse-mode gradients of upstream * output with respect to all
    parameters and the input.

    At a ReLU kink (pre-activation exactly zero) the subgradient 0 is used.
    """
    a = np.asarray(x, dtype=np.float64)
    if a.shape != (net.input_dim,):
        raise ValueError(
            f"input shape {a.shape} does not match input dimension "
            f"{net.input_dim}"
        )
    activations = [a]
    masks = []
    for w, b in zip(net.hidden_weights, net.hidden_biases):
        z = w @ activations[-1] + b
        masks.append(z > 0.0)
        activations.append(np.maximum(z, 0.0))

    d_out_w = upstream * activations[-1]
    d_out_b = float(upstream)
    delta = upstream * net.out_weights * masks[-1]
    d_w = [np.empty(0)] * net.layers
    d_b = [np.empty(0)] * net.layers
    for r in range(net.layers - 1, -1, -1):
        d_w[r] = np.outer(delta, activations[r])
        d_b[r] = delta.copy()
        if r > 0:
            delta = (net.hidden_weights[r].T @ delta) * masks[r - 1]
        else:
            delta = net.hidden_weights[0].T @ delta
    return DenseGrads(
        hidden_weights=d_w,
        hidden_biases=d_b,
        out_weights=d_out_w,
        out_bias=d_out_b,
        input=delta,
    )


def init_dense(input_dim: int, widths: list[int], rng: RngState) -> DenseNet:
    """Random initial network: hidden weights uniform on
    +-sqrt(6/(fan_in+fan_out)), biases zero, output weights uniform on
    [-0.1, 0.1], output bias zero."""
    hidden_w = []
    hidden_b = []
    prev = input_dim
    for width in widths:
        bound = np.sqrt(6.0 / (prev + width))
        hidden_w.append(rng.uniform_array(-bound, bound, (width, prev)))
        hidden_b.append(np.zeros(width))
        prev = width
    out_w = rng.uniform_array(-0.1, 0.1, (prev,))
    return DenseNet(
        input_dim=input_dim,
        hidden_weights=hidden_w,
        hidden_biases=hidden_b,
        out_weights=out_w,
        out_bias=0.0,
    )


def identity_net() -> DenseNet:
    """One-input network computing x exactly via max{x,0} - max{-x,0}."""
    return DenseNet(
        input_dim=1,
        hidden_weights=[np.array([[1.0], [-1.0]])],
        hidden_biases=[np.zeros(2)],
        out_weights=np.array([1.0, -1.0]),
        out_bias=0.0,
    )


def dense_to_dict(net: DenseNet) -> dict:
    return {
        "kind": "dense",
        "input_dim": net.input_dim,
        "widths": net.widths,
        "hidden_weights": [w.tolist() for w in net.hidden_weights],
        "hidden_biases": [b.tolist() for b in net.hidden_biases],
        "out_weights": net.out_weights.tolist(),
        "out_bias": net.out_bias,
    }


def dense_from_dict(doc: dict) -> DenseNet:
    if doc.get("kind") != "dense":
        raise ValueError(f"expected kind 'dense', got {doc.get('kind')!r}")
    return DenseNet(
        input_dim=int(doc["input_dim"]),
        hidden_weights=[np.array(w, dtype=np.float64) for w in doc["hidden_weights"]],
        hidden_biases=[np.array(b, dtype=np.float64) for b in doc["hidden_biases"]],
        out_weights=np.array(doc["out_weights"], dtype=np.float64),
        out_bias=float(doc["out_bias"]),
    )


def save_dense(net: DenseNet, path) -> None:
    with open(path, "w") as fh:
        json.dump(dense_to_dict(net), fh, indent=1)


def load_dense(path) -> DenseNet:
    with open(path) as fh:
        return dense_from_dict(json.load(fh))
