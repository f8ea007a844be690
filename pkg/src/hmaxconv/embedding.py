"""Exact construction of a ConvNet computing a hierarchical max-pool model.

Given a :class:`~hmaxconv.hierarchy.HierTree` whose nodes are dense ReLU
networks (uniform depth and width), :func:`build_cnn_from_hierarchy` emits a
:class:`~hmaxconv.conv.ConvNet` whose output equals the max-pooled tree
value on every image, up to float accumulation error.

The construction stores every intermediate value v as a difference of two
ReLU channels, using max{v,0} - max{-v,0} = v:

* saving copies a layer r-1 channel value into a channel pair of layer r;
* propagating carries a pair difference to the next layer unchanged;
* splicing embeds one dense node network across consecutive layers so that
  a chosen output pair difference equals the node applied to four input
  pair differences read at quadrant-shifted positions.

All save/propagate filter weights lie in {-1, 0, 1}; spliced weights are
(possibly negated) copies of node-network weights.  Layer and channel
indices in this module are 1-based, matching the grid convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conv import ConvNet, conv_forward_batch
from .dense import DenseNet
from .hierarchy import HierTree, eval_maxpool
from .images import Image


@dataclass(frozen=True)
class EmbeddingPlan:
    """Closed-form layer/channel/filter schedule for one tree embedding.

    For a level-l tree with node networks of net_layers hidden layers and
    net_width neurons each:

    * total_layers = (4^l - 1)/3 * net_layers + l,
    * pair_channels = (2*4^l + 4)/3 (two channels per stored value),
    * channels_per_layer = pair_channels + net_width,
    * filter sizes are 2^k throughout the block of layers computing scale k,
      the block for scale k being 4^(l-k) * net_layers + 1 layers long.
    """

    level: int
    net_layers: int
    net_width: int
    total_layers: int
    pair_channels: int
    channels_per_layer: int
    filter_sizes: list[int]


def plan_embedding(level: int, net_layers: int, net_width: int) -> EmbeddingPlan:
    """Compute the embedding schedule for the given tree shape."""
    if level < 1 or net_layers < 1 or net_width < 1:
        raise ValueError(
            f"level, net_layers, net_width must be >= 1, got "
            f"{level}, {net_layers}, {net_width}"
        )
    total = (4**level - 1) // 3 * net_layers + level
    pair_channels = (2 * 4**level + 4) // 3
    sizes: list[int] = []
    for k in range(1, level + 1):
        sizes.extend([2**k] * (4 ** (level - k) * net_layers + 1))
    assert len(sizes) == total
    return EmbeddingPlan(
        level=level,
        net_layers=net_layers,
        net_width=net_width,
        total_layers=total,
        pair_channels=pair_channels,
        channels_per_layer=pair_channels + net_width,
        filter_sizes=sizes,
    )


@dataclass(frozen=True)
class SpliceSpec:
    """Where and how one dense node network is written into the ConvNet.

    The splice occupies conv layers layer_offset+1 .. layer_offset+L+1 for a
    node with L hidden layers: hidden layers run in work_channels, the output
    (positive, negative) lands in output_pair.  At scale k the first spliced
    layer reads its four inputs at window offsets (1,1), (1+h,1), (1,1+h),
    (1+h,1+h) with h = 2^(k-1) -- except at scale 1, where the four raw
    pixel arguments are listed row-major: (1,1), (1,2), (2,1), (2,2).

    With raw_input=True (only valid at layer_offset 0, scale 1) the inputs
    are read directly from the single input channel instead of channel-pair
    differences.
    """

    layer_offset: int
    scale: int
    input_pairs: tuple[tuple[int, int], ...]
    output_pair: tuple[int, int]
    work_channels: tuple[int, ...]
    g_net: DenseNet
    raw_input: bool = False


def _arg_offsets(scale: int) -> list[tuple[int, int]]:
    """1-based window offsets of the four node arguments at a given scale."""
    if scale == 1:
        return [(1, 1), (1, 2), (2, 1), (2, 2)]
    h = 2 ** (scale - 1)
    return [(1, 1), (1 + h, 1), (1, 1 + h), (1 + h, 1 + h)]


class EmbeddingBuilder:
    """Mutable ConvNet under construction with per-layer write tracking.

    Each channel of each layer may be written at most once; a second write
    raises.  Unwritten channels keep zero filters and biases.
    """

    def __init__(self, total_layers: int, channels: int, filter_sizes: list[int]):
        if len(filter_sizes) != total_layers:
            raise ValueError(
                f"need {total_layers} filter sizes, got {len(filter_sizes)}"
            )
        self.channels = channels
        self.filter_sizes = list(filter_sizes)
        chain = [1] + [channels] * total_layers
        self.filters = [
            np.zeros((m, m, chain[r], channels))
            for r, m in enumerate(self.filter_sizes)
        ]
        self.biases = [np.zeros(channels) for _ in range(total_layers)]
        self.out_weights = np.zeros(channels)
        self._written: dict[int, set[int]] = {}

    @classmethod
    def around(cls, net: ConvNet) -> "EmbeddingBuilder":
        """Builder mutating an existing net's arrays in place (no tracking of
        writes made before this call)."""
        if len(set(net.channels)) != 1:
            raise ValueError("builder requires a constant channel count")
        builder = cls.__new__(cls)
        builder.channels = net.channels[0]
        builder.filter_sizes = list(net.filter_sizes)
        builder.filters = net.filters
        builder.biases = net.biases
        builder.out_weights = net.out_weights
        builder._written = {}
        return builder

    @property
    def total_layers(self) -> int:
        return len(self.filters)

    def _claim(self, layer: int, channel: int) -> None:
        if not 1 <= layer <= self.total_layers:
            raise ValueError(f"layer {layer} outside 1..{self.total_layers}")
        if not 1 <= channel <= self.channels:
            raise ValueError(f"channel {channel} outside 1..{self.channels}")
        taken = self._written.setdefault(layer, set())
        if channel in taken:
            raise ValueError(f"channel {channel} of layer {layer} already written")
        taken.add(channel)

    def write_identity_pair(self, layer: int, source, dest: tuple[int, int]) -> None:
        """Make dest's pair difference in `layer` reproduce a layer-(layer-1)
        value: a single source channel (save) or a source pair difference
        (propagate).  All weights used are in {-1, 0, 1}."""
        d_pos, d_neg = dest
        if d_pos == d_neg:
            raise ValueError(f"destination pair {dest} must use two distinct channels")
        self._claim(layer, d_pos)
        self._claim(layer, d_neg)
        w = self.filters[layer - 1]
        if isinstance(source, int):
            if not 1 <= source <= w.shape[2]:
                raise ValueError(
                    f"source channel {source} outside 1..{w.shape[2]} of layer "
                    f"{layer - 1}"
                )
            w[0, 0, source - 1, d_pos - 1] = 1.0
            w[0, 0, source - 1, d_neg - 1] = -1.0
        else:
            s_pos, s_neg = source
            w[0, 0, s_pos - 1, d_pos - 1] = 1.0
            w[0, 0, s_neg - 1, d_pos - 1] = -1.0
            w[0, 0, s_neg - 1, d_neg - 1] = 1.0
            w[0, 0, s_pos - 1, d_neg - 1] = -1.0

    def splice_dense(self, spec: SpliceSpec) -> None:
        """Write one dense node network across spec's layer range so that the
        output pair difference equals the node applied to the four inputs."""
        g = spec.g_net
        if g.input_dim != 4:
            raise ValueError(f"node network must take 4 inputs, got {g.input_dim}")
        width = g.widths[0]
        if any(wd != width for wd in g.widths):
            raise ValueError(f"node network must have uniform width, got {g.widths}")
        if len(spec.work_channels) < width:
            raise ValueError(
                f"channel budget violated: node width {width} exceeds the "
                f"{len(spec.work_channels)} work channels"
            )
        first = spec.layer_offset + 1
        last = spec.layer_offset + g.layers + 1
        if last > self.total_layers:
            raise ValueError(
                f"splice through layer {last} exceeds depth {self.total_layers}"
            )
        offsets = _arg_offsets(spec.scale)
        reach = max(max(t1, t2) for t1, t2 in offsets)
        if self.filter_sizes[first - 1] < reach:
            raise ValueError(
                f"filter size {self.filter_sizes[first - 1]} at layer {first} "
                f"cannot reach window offset {reach} needed at scale {spec.scale}"
            )
        if spec.raw_input and spec.layer_offset != 0:
            raise ValueError("raw input mode reads layer 0 and needs layer_offset 0")

        work = list(spec.work_channels[:width])
        # first hidden layer: read the four arguments at their offsets
        w_in = g.hidden_weights[0]
        for i in range(width):
            ch = work[i]
            self._claim(first, ch)
            flt = self.filters[first - 1]
            for m, (t1, t2) in enumerate(offsets):
                if spec.raw_input:
                    flt[t1 - 1, t2 - 1, 0, ch - 1] = w_in[i, m]
                else:
                    p_pos, p_neg = spec.input_pairs[m]
                    flt[t1 - 1, t2 - 1, p_pos - 1, ch - 1] += w_in[i, m]
                    flt[t1 - 1, t2 - 1, p_neg - 1, ch - 1] += -w_in[i, m]
            self.biases[first - 1][ch - 1] = g.hidden_biases[0][i]
        # remaining hidden layers: plain dense wiring at window offset (1,1)
        for h in range(2, g.layers + 1):
            layer = spec.layer_offset + h
            w_h = g.hidden_weights[h - 1]
            for i in range(width):
                ch = work[i]
                self._claim(layer, ch)
                for j in range(width):
                    self.filters[layer - 1][0, 0, work[j] - 1, ch - 1] = w_h[i, j]
                self.biases[layer - 1][ch - 1] = g.hidden_biases[h - 1][i]
        # output layer: signed copy into the output pair
        o_pos, o_neg = spec.output_pair
        self._claim(last, o_pos)
        self._claim(last, o_neg)
        for j in range(width):
            self.filters[last - 1][0, 0, work[j] - 1, o_pos - 1] = g.out_weights[j]
            self.filters[last - 1][0, 0, work[j] - 1, o_neg - 1] = -g.out_weights[j]
        self.biases[last - 1][o_pos - 1] = g.out_bias
        self.biases[last - 1][o_neg - 1] = -g.out_bias

    def select_output_pair(self, pair: tuple[int, int]) -> None:
        self.out_weights[:] = 0.0
        self.out_weights[pair[0] - 1] = 1.0
        self.out_weights[pair[1] - 1] = -1.0

    def written_channels(self) -> dict[int, set[int]]:
        return {layer: set(chs) for layer, chs in self._written.items()}

    def to_convnet(self) -> ConvNet:
        return ConvNet(
            channels=[self.channels] * self.total_layers,
            filter_sizes=list(self.filter_sizes),
            filters=[w.copy() for w in self.filters],
            biases=[b.copy() for b in self.biases],
            out_weights=self.out_weights.copy(),
        )


def write_identity_pair(
    net: ConvNet, layer: int, source, dest: tuple[int, int]
) -> ConvNet:
    """Copy of `net` with a save/propagate pair written at `layer`.

    A destination channel that already carries nonzero weights counts as a
    collision and is rejected.
    """
    out = net.copy()
    for ch in dest:
        if np.any(out.filters[layer - 1][:, :, :, ch - 1] != 0.0) or (
            out.biases[layer - 1][ch - 1] != 0.0
        ):
            raise ValueError(f"channel {ch} of layer {layer} already written")
    EmbeddingBuilder.around(out).write_identity_pair(layer, source, dest)
    return out


def splice_dense_into_conv(net: ConvNet, spec: SpliceSpec) -> ConvNet:
    """Copy of `net` with the splice applied."""
    out = net.copy()
    EmbeddingBuilder.around(out).splice_dense(spec)
    return out


def _pair_base(level: int, scale: int) -> int:
    """First channel below the block of pairs holding scale-`scale` values."""
    return 2 + sum(2 * 4 ** (level - i) for i in range(1, scale))


def build_cnn_from_hierarchy(
    tree: HierTree, plan: EmbeddingPlan
) -> tuple[ConvNet, dict[int, set[int]]]:
    """ConvNet computing eval_maxpool(tree, .) exactly, plus the per-layer
    set of written channels.

    Every tree node must be a DenseNet with 4 inputs, plan.net_layers hidden
    layers, and plan.net_width neurons per hidden layer.
    """
    level, L, width = plan.level, plan.net_layers, plan.net_width
    if tree.level != level:
        raise ValueError(f"plan is for level {level}, tree has level {tree.level}")
    for key, node in tree.nodes.items():
        if not isinstance(node, DenseNet):
            raise ValueError(f"node {key} is not a DenseNet")
        if node.input_dim != 4 or node.layers != L or node.widths != [width] * L:
            raise ValueError(
                f"node {key} must be a 4-input network with {L} hidden layers "
                f"of width {width}; got input_dim={node.input_dim}, "
                f"widths={node.widths}"
            )

    builder = EmbeddingBuilder(
        plan.total_layers, plan.channels_per_layer, plan.filter_sizes
    )
    T = plan.pair_channels
    work = tuple(range(T + 1, T + width + 1))

    def propagate(pair: tuple[int, int], start: int) -> None:
        for layer in range(start, plan.total_layers + 1):
            builder.write_identity_pair(layer, pair, pair)

    # the raw input is saved into channels (1, 2) at layer 1 and carried on
    builder.write_identity_pair(1, 1, (1, 2))
    propagate((1, 2), 2)

    hidden_layers_done = 0  # hidden layers consumed by completed scales
    for k in range(1, level + 1):
        base_out = _pair_base(level, k)
        base_in = _pair_base(level, k - 1) if k > 1 else 0
        for s in range(1, 4 ** (level - k) + 1):
            r0 = hidden_layers_done + (k - 1) + (s - 1) * L
            if k == 1:
                pairs = ((1, 2),) * 4
            else:
                children = [4 * (s - 1) + m for m in (1, 2, 3, 4)]
                pairs = tuple(
                    (base_in + 2 * c - 1, base_in + 2 * c) for c in children
                )
            out_pair = (base_out + 2 * s - 1, base_out + 2 * s)
            builder.splice_dense(
                SpliceSpec(
                    layer_offset=r0,
                    scale=k,
                    input_pairs=pairs,
                    output_pair=out_pair,
                    work_channels=work,
                    g_net=tree.nodes[(k, s)],
                    raw_input=(k == 1 and s == 1),
                )
            )
            propagate(out_pair, r0 + L + 2)
        hidden_layers_done += 4 ** (level - k) * L

    top = _pair_base(level, level)
    builder.select_output_pair((top + 1, top + 2))
    return builder.to_convnet(), builder.written_channels()


def embedding_deviation(
    net: ConvNet,
    tree: HierTree,
    images: list[Image],
    dtype=np.float64,
) -> float:
    """Largest |ConvNet output - max-pooled tree value| over the images.

    Pass dtype=np.longdouble for an extended-precision comparison.
    """
    by_shape: dict[tuple[int, int], list[Image]] = {}
    for img in images:
        by_shape.setdefault((img.d1, img.d2), []).append(img)
    worst = 0.0
    for group in by_shape.values():
        batch = np.stack([img.pixels for img in group]).astype(dtype)
        got = conv_forward_batch(net, batch, dtype=dtype)
        for b, img in enumerate(group):
            want = eval_maxpool(tree, img, dtype=dtype)
            worst = max(worst, abs(float(got[b]) - float(want)))
    return worst
