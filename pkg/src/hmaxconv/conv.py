"""Convolutional networks with zero padding and a global max output.

A :class:`ConvNet` owns L convolutional layers.  Layer r applies k_r filters
of size M_r x M_r to the previous layer's channels; window terms that fall
outside the grid are omitted (equivalently, the previous layer is padded
with zeros on the high-index sides), so every activation map keeps the full
d1 x d2 spatial extent.  The scalar output is the maximum over positions
(i, j) with i <= d1 - M_L + 1 and j <= d2 - M_L + 1 of a weighted sum of
the last layer's channels; positions beyond that range are excluded even
though padded activations exist there.

A :class:`CompositeNet` feeds the outputs of t structurally identical (but
independently parameterized) ConvNets into one dense ReLU head.

``conv_layers_forward`` is the reference evaluator: the accumulation order
(bias first, then window offsets (t1, t2) in lexicographic order, each
contracting input channels in index order) is fixed and documented so tests
can reproduce it exactly.  ``conv_forward_batch`` is an equivalent batched
path used where throughput matters; the two agree to float accumulation
error and are tested against each other.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dense import DenseGrads, DenseNet, dense_forward, dense_from_dict, dense_grad, dense_to_dict
from .images import Image
from .rng import RngState


@dataclass
class ConvNet:
    """Filters, per-channel biases, and output weights of one network.

    filters[r] has shape (M_r, M_r, k_{r-1}, k_r) with k_0 = 1; entry
    (t1-1, t2-1, s1-1, s2-1) weights the value at window offset (t1, t2)
    of input channel s1 feeding output channel s2.
    """

    channels: list[int]
    filter_sizes: list[int]
    filters: list[np.ndarray]
    biases: list[np.ndarray]
    out_weights: np.ndarray

    def __post_init__(self):
        L = len(self.channels)
        if L < 1:
            raise ValueError("need at least one convolutional layer")
        if len(self.filter_sizes) != L or len(self.filters) != L or len(self.biases) != L:
            raise ValueError(
                f"channels, filter_sizes, filters, biases must all have "
                f"length {L}"
            )
        prev = 1
        for r in range(L):
            m, k = self.filter_sizes[r], self.channels[r]
            if m < 1:
                raise ValueError(f"layer {r + 1}: filter size must be >= 1, got {m}")
            if self.filters[r].shape != (m, m, prev, k):
                raise ValueError(
                    f"layer {r + 1}: filter shape {self.filters[r].shape} != "
                    f"{(m, m, prev, k)}"
                )
            if self.biases[r].shape != (k,):
                raise ValueError(
                    f"layer {r + 1}: bias shape {self.biases[r].shape} != ({k},)"
                )
            prev = k
        if self.out_weights.shape != (prev,):
            raise ValueError(
                f"output weight shape {self.out_weights.shape} != ({prev},)"
            )

    @property
    def layers(self) -> int:
        return len(self.channels)

    def copy(self) -> "ConvNet":
        return ConvNet(
            channels=list(self.channels),
            filter_sizes=list(self.filter_sizes),
            filters=[w.copy() for w in self.filters],
            biases=[b.copy() for b in self.biases],
            out_weights=self.out_weights.copy(),
        )

    def param_arrays(self) -> list[np.ndarray]:
        return self.filters + self.biases + [self.out_weights]

    def num_params(self) -> int:
        return sum(a.size for a in self.param_arrays())


@dataclass
class CompositeNet:
    """t parallel ConvNets of identical shape feeding one dense head."""

    conv_nets: list[ConvNet]
    head: DenseNet

    def __post_init__(self):
        if not self.conv_nets:
            raise ValueError("need at least one convolutional network")
        first = self.conv_nets[0]
        for b, net in enumerate(self.conv_nets[1:], start=2):
            if net.channels != first.channels or net.filter_sizes != first.filter_sizes:
                raise ValueError(
                    f"convolutional network {b} differs in shape from the first"
                )
        if self.head.input_dim != len(self.conv_nets):
            raise ValueError(
                f"head expects {self.head.input_dim} inputs but there are "
                f"{len(self.conv_nets)} convolutional networks"
            )

    @property
    def order(self) -> int:
        return len(self.conv_nets)

    def copy(self) -> "CompositeNet":
        return CompositeNet(
            conv_nets=[net.copy() for net in self.conv_nets],
            head=self.head.copy(),
        )

    def num_params(self) -> int:
        return sum(net.num_params() for net in self.conv_nets) + self.head.num_params()


@dataclass
class ConvGrads:
    filters: list[np.ndarray]
    biases: list[np.ndarray]
    out_weights: np.ndarray


@dataclass
class CompositeGrads:
    conv_nets: list[ConvGrads]
    head: DenseGrads


def _check_dims(net: ConvNet, d1: int, d2: int) -> None:
    worst = max(net.filter_sizes)
    if worst > min(d1, d2):
        raise ValueError(
            f"filter size {worst} exceeds image dimensions {d1}x{d2}"
        )


def _pad_high(arr: np.ndarray, extra: int) -> np.ndarray:
    """Zero-pad the two spatial axes (the last two before channels) on their
    high-index sides only."""
    if extra == 0:
        return arr
    pad = [(0, 0)] * arr.ndim
    pad[-3] = (0, extra)
    pad[-2] = (0, extra)
    return np.pad(arr, pad)


def conv_layers_forward(net: ConvNet, img: Image, dtype=np.float64) -> list[np.ndarray]:
    """Reference activation stack [o^(0), ..., o^(L)], each (d1, d2, k_r).

    o^(0) is the image itself as a single channel.  Accumulation order per
    layer: bias, then window offsets (t1, t2) lexicographically, each adding
    the channel contraction for that offset.
    """
    d1, d2 = img.d1, img.d2
    _check_dims(net, d1, d2)
    stack = [np.asarray(img.pixels, dtype=dtype).reshape(d1, d2, 1)]
    for r in range(net.layers):
        m = net.filter_sizes[r]
        w = net.filters[r].astype(dtype)
        padded = _pad_high(stack[-1], m - 1)
        acc = np.broadcast_to(net.biases[r].astype(dtype), (d1, d2, net.channels[r])).copy()
        for t1 in range(m):
            for t2 in range(m):
                acc += np.einsum(
                    "xyi,io->xyo",
                    padded[t1 : t1 + d1, t2 : t2 + d2, :],
                    w[t1, t2],
                    optimize=False,
                )
        stack.append(np.maximum(acc, 0.0))
    return stack


def _output_map(net: ConvNet, last: np.ndarray, dtype=np.float64) -> np.ndarray:
    """Weighted channel sum of the channel-last activation (..., d1, d2, k),
    cropped to the valid output positions i <= d1 - M_L + 1,
    j <= d2 - M_L + 1."""
    m_last = net.filter_sizes[-1]
    d1, d2 = last.shape[-3], last.shape[-2]
    z = last @ net.out_weights.astype(dtype)
    return z[..., : d1 - m_last + 1, : d2 - m_last + 1]


def conv_forward(net: ConvNet, img: Image, dtype=np.float64) -> float:
    """Scalar network output: global max of the weighted last-layer sum over
    the valid position range."""
    stack = conv_layers_forward(net, img, dtype=dtype)
    return float(np.max(_output_map(net, stack[-1], dtype=dtype)))


def _forward_stack_batch(
    net: ConvNet, batch: np.ndarray, dtype=np.float64
) -> list[np.ndarray]:
    """Batched activation stack via matrix products; equal to the reference
    path up to float accumulation error."""
    B, d1, d2 = batch.shape
    _check_dims(net, d1, d2)
    stack = [np.asarray(batch, dtype=dtype).reshape(B, d1, d2, 1)]
    for r in range(net.layers):
        m = net.filter_sizes[r]
        w = net.filters[r].astype(dtype)
        padded = _pad_high(stack[-1], m - 1)
        acc = np.tile(net.biases[r].astype(dtype), (B, d1, d2, 1))
        for t1 in range(m):
            for t2 in range(m):
                acc += padded[:, t1 : t1 + d1, t2 : t2 + d2, :] @ w[t1, t2]
        stack.append(np.maximum(acc, 0.0))
    return stack


def conv_forward_batch(net: ConvNet, batch: np.ndarray, dtype=np.float64) -> np.ndarray:
    """Network outputs for a (B, d1, d2) pixel batch, shape (B,)."""
    stack = _forward_stack_batch(net, batch, dtype=dtype)
    z = _output_map(net, stack[-1], dtype=dtype)
    return z.reshape(z.shape[0], -1).max(axis=1)


def composite_forward(net: CompositeNet, img: Image, dtype=np.float64) -> float:
    """Dense head applied to the t convolutional outputs."""
    pooled = np.array(
        [conv_forward(f, img, dtype=dtype) for f in net.conv_nets], dtype=dtype
    )
    return dense_forward(net.head, pooled, dtype=dtype)


def composite_forward_batch(
    net: CompositeNet, batch: np.ndarray, dtype=np.float64
) -> np.ndarray:
    """Composite outputs for a (B, d1, d2) pixel batch, shape (B,)."""
    pooled = np.stack(
        [conv_forward_batch(f, batch, dtype=dtype) for f in net.conv_nets], axis=1
    )
    a = pooled
    for w, b in zip(net.head.hidden_weights, net.head.hidden_biases):
        a = np.maximum(a @ w.T.astype(dtype) + b.astype(dtype), 0.0)
    return a @ net.head.out_weights.astype(dtype) + net.head.out_bias


def _conv_value_and_grad(
    net: ConvNet, img: Image, upstream: float
) -> tuple[float, ConvGrads]:
    """Output value and reverse-mode parameter gradients for one image.

    The global max routes gradient only to its first argmax position in
    row-major (i, j) order; the ReLU kink uses subgradient 0.
    """
    d1, d2 = img.d1, img.d2
    stack = conv_layers_forward(net, img)
    valid = _output_map(net, stack[-1])
    flat = int(np.argmax(valid))
    pos = np.unravel_index(flat, valid.shape)
    value = float(valid[pos])

    d_out_w = upstream * stack[-1][pos[0], pos[1], :]
    g = np.zeros_like(stack[-1])
    g[pos[0], pos[1], :] = upstream * net.out_weights
    d_filters: list[np.ndarray] = [np.empty(0)] * net.layers
    d_biases: list[np.ndarray] = [np.empty(0)] * net.layers
    for r in range(net.layers - 1, -1, -1):
        m = net.filter_sizes[r]
        g = g * (stack[r + 1] > 0.0)
        d_biases[r] = g.sum(axis=(0, 1))
        padded_prev = _pad_high(stack[r], m - 1)
        dw = np.zeros_like(net.filters[r])
        dpadded = np.zeros_like(padded_prev)
        for t1 in range(m):
            for t2 in range(m):
                src = padded_prev[t1 : t1 + d1, t2 : t2 + d2, :]
                dw[t1, t2] = np.einsum("xyi,xyo->io", src, g)
                dpadded[t1 : t1 + d1, t2 : t2 + d2, :] += g @ net.filters[r][t1, t2].T
        d_filters[r] = dw
        g = dpadded[:d1, :d2, :]
    return value, ConvGrads(filters=d_filters, biases=d_biases, out_weights=d_out_w)


def composite_grad(
    net: CompositeNet, img: Image, upstream: float = 1.0
) -> CompositeGrads:
    """Reverse-mode gradients of upstream * composite_forward(net, img)."""
    pooled = np.array([conv_forward(f, img) for f in net.conv_nets])
    head_grads = dense_grad(net.head, pooled, upstream)
    conv_grads = []
    for b, f in enumerate(net.conv_nets):
        _, grads = _conv_value_and_grad(f, img, float(head_grads.input[b]))
        conv_grads.append(grads)
    return CompositeGrads(conv_nets=conv_grads, head=head_grads)


def init_conv(
    channels: list[int], filter_sizes: list[int], rng: RngState
) -> ConvNet:
    """Random initial network: filters uniform on +-sqrt(6/(fan_in+fan_out))
    with fan counts M^2 * k, biases zero, output weights uniform on
    +-sqrt(6/(k_L+1)).

    The output-weight scale treats the channel reduction as a width-k_L
    affine map; a much smaller scale starves the global max of variance
    across images and stalls training.
    """
    filters = []
    biases = []
    prev = 1
    for k, m in zip(channels, filter_sizes):
        bound = np.sqrt(6.0 / (m * m * prev + m * m * k))
        filters.append(rng.uniform_array(-bound, bound, (m, m, prev, k)))
        biases.append(np.zeros(k))
        prev = k
    out_bound = np.sqrt(6.0 / (prev + 1))
    return ConvNet(
        channels=list(channels),
        filter_sizes=list(filter_sizes),
        filters=filters,
        biases=biases,
        out_weights=rng.uniform_array(-out_bound, out_bound, (prev,)),
    )


def init_composite(
    order: int,
    channels: list[int],
    filter_sizes: list[int],
    dense_widths: list[int],
    rng: RngState,
) -> CompositeNet:
    """Random composite network; the t convolutional parts share shapes but
    draw independent parameters."""
    from .dense import init_dense

    conv_nets = [init_conv(channels, filter_sizes, rng) for _ in range(order)]
    head = init_dense(order, dense_widths, rng)
    return CompositeNet(conv_nets=conv_nets, head=head)


def conv_to_dict(net: ConvNet) -> dict:
    return {
        "kind": "conv",
        "channels": list(net.channels),
        "filter_sizes": list(net.filter_sizes),
        "filters": [w.tolist() for w in net.filters],
        "biases": [b.tolist() for b in net.biases],
        "out_weights": net.out_weights.tolist(),
    }


def conv_from_dict(doc: dict) -> ConvNet:
    if doc.get("kind") != "conv":
        raise ValueError(f"expected kind 'conv', got {doc.get('kind')!r}")
    return ConvNet(
        channels=[int(k) for k in doc["channels"]],
        filter_sizes=[int(m) for m in doc["filter_sizes"]],
        filters=[np.array(w, dtype=np.float64) for w in doc["filters"]],
        biases=[np.array(b, dtype=np.float64) for b in doc["biases"]],
        out_weights=np.array(doc["out_weights"], dtype=np.float64),
    )


def composite_to_dict(net: CompositeNet) -> dict:
    return {
        "kind": "composite",
        "num_params": net.num_params(),
        "conv_nets": [conv_to_dict(f) for f in net.conv_nets],
        "head": dense_to_dict(net.head),
    }


def composite_from_dict(doc: dict) -> CompositeNet:
    if doc.get("kind") != "composite":
        raise ValueError(f"expected kind 'composite', got {doc.get('kind')!r}")
    return CompositeNet(
        conv_nets=[conv_from_dict(d) for d in doc["conv_nets"]],
        head=dense_from_dict(doc["head"]),
    )


def save_composite(net: CompositeNet, path) -> None:
    with open(path, "w") as fh:
        json.dump(composite_to_dict(net), fh)


def load_composite(path) -> CompositeNet:
    with open(path) as fh:
        return composite_from_dict(json.load(fh))
