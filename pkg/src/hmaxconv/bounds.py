"""Capacity and rate calculators for the composite convolutional class.

Covers exact weight counts, an explicit VC-dimension bound, the derived
covering-number bound, the depth/width/filter schedule that attains the
dimension-free convergence rate, and two numeric inequalities used by the
VC argument.  Potentially huge quantities are evaluated in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


def filter_size_schedule(level: int, repeats: int) -> list[int]:
    """Filter sizes 2^pi(s) for a depth-(4^level-1)/3*repeats+level network.

    pi is the nondecreasing step function onto {1, ..., level} defined by
    pi(s) = sum_{i=1..level} 1{s >= i + repeats * sum_{r=level-i+1..level-1} 4^r}.
    """
    if level < 1 or repeats < 1:
        raise ValueError(f"level and repeats must be >= 1, got {level}, {repeats}")
    depth = (4**level - 1) // 3 * repeats + level
    sizes = []
    for s in range(1, depth + 1):
        pi = 0
        for i in range(1, level + 1):
            threshold = i + repeats * sum(4**r for r in range(level - i + 1, level))
            if s >= threshold:
                pi += 1
        sizes.append(2**pi)
    return sizes


@dataclass(frozen=True)
class ArchSchedule:
    """Depth/width/filter bundle for the rate-attaining architecture."""

    repeats: int            # number of layers spent per node network
    conv_layers: int        # L1
    dense_layers: int       # L2
    order: int              # t, number of parallel convolutional networks
    conv_channels: list[int]
    dense_widths: list[int]
    filter_sizes: list[int]
    c1: float
    c2: int


def architecture_schedule(
    n: int,
    p1: float,
    p2: float,
    order: int,
    level: int,
    c1: float = 1.0,
    c2: int = 1,
) -> ArchSchedule:
    """Architecture whose least-squares estimate attains the target rate.

    The per-node depth grows like the larger of n^(4 / (2(2 p1 + 4))) and
    n^(order / (2(2 p2 + order))); channel counts are (2*4^level + 4)/3 + c2
    in every convolutional layer and c2 in every dense layer.
    """
    if n <= 1:
        raise ValueError(f"sample size must exceed 1, got {n}")
    if p1 < 1 or p2 < 1 or order < 1 or level < 1:
        raise ValueError("p1, p2 >= 1 and order, level >= 1 required")
    repeats = max(
        math.ceil(c1 * n ** (4.0 / (2.0 * (2.0 * p1 + 4.0)))),
        math.ceil(c1 * n ** (order / (2.0 * (2.0 * p2 + order)))),
    )
    conv_layers = (4**level - 1) // 3 * repeats + level
    dense_layers = repeats
    channels = (2 * 4**level + 4) // 3 + c2
    return ArchSchedule(
        repeats=repeats,
        conv_layers=conv_layers,
        dense_layers=dense_layers,
        order=order,
        conv_channels=[channels] * conv_layers,
        dense_widths=[c2] * dense_layers,
        filter_sizes=filter_size_schedule(level, repeats),
        c1=c1,
        c2=c2,
    )


def convergence_rate(
    n: int, p1: float, p2: float, order: int, squared: bool = False
) -> float:
    """Dimension-free risk rate max{n^(-p1/(2p1+4)), n^(-p2/(2p2+order))}.

    With squared=True, returns the corresponding L2-error rate, which has
    both exponents doubled.
    """
    if n <= 1:
        raise ValueError(f"sample size must exceed 1, got {n}")
    e1 = p1 / (2.0 * p1 + 4.0)
    e2 = p2 / (2.0 * p2 + order)
    scale = 2.0 if squared else 1.0
    return max(n ** (-scale * e1), n ** (-scale * e2))


@dataclass(frozen=True)
class ComplexityReport:
    """Cumulative weight counts and capacity bounds for one architecture."""

    weight_counts: list[int]    # W_1 .. W_{L1+L2+2}, strictly increasing
    total_weights: int          # W = W_{L1+L2+2}
    vc_bound: float | None = None
    covering_bound: float | None = None


def weight_count(
    order: int,
    conv_layers: int,
    conv_channels: list[int],
    filter_sizes: list[int],
    dense_layers: int,
    dense_widths: list[int],
) -> ComplexityReport:
    """Exact trainable-parameter counts, accumulated layer by layer.

    The count walks the composite network: `order` parallel convolutional
    networks (filters plus per-channel biases, then output weights), then
    the dense head (weights plus biases per layer, then the affine output).
    """
    if len(conv_channels) != conv_layers or len(filter_sizes) != conv_layers:
        raise ValueError(
            f"need {conv_layers} channel counts and filter sizes, got "
            f"{len(conv_channels)} and {len(filter_sizes)}"
        )
    if len(dense_widths) != dense_layers:
        raise ValueError(
            f"need {dense_layers} dense widths, got {len(dense_widths)}"
        )
    chain = [1] + list(conv_channels) + [order] + list(dense_widths)
    counts: list[int] = []
    running = 0
    for r in range(1, conv_layers + 1):
        running += order * (filter_sizes[r - 1] ** 2 * chain[r] * chain[r - 1] + chain[r])
        counts.append(running)
    running += order * chain[conv_layers]
    counts.append(running)
    for r in range(1, dense_layers + 1):
        running += (chain[conv_layers + r] + 1) * chain[conv_layers + r + 1]
        counts.append(running)
    running += chain[conv_layers + dense_layers + 1] + 1
    counts.append(running)
    return ComplexityReport(weight_counts=counts, total_weights=running)


def vc_bound(
    order: int,
    conv_layers: int,
    dense_layers: int,
    k_max: int,
    m_max: int,
    d1: int,
    d2: int,
) -> float:
    """Explicit VC-dimension bound for the composite class.

    16 * t * (L1+L2+2)^2 * k_max^2 * M_max^2
    * log2(2e * t * (L1+L2+2) * k_max * d1 * d2).
    """
    if d1 * d2 <= 1:
        raise ValueError(f"image dimension d1*d2 must exceed 1, got {d1 * d2}")
    depth = conv_layers + dense_layers + 2
    return (
        16.0
        * order
        * depth**2
        * k_max**2
        * m_max**2
        * math.log2(2.0 * math.e * order * depth * k_max * d1 * d2)
    )


def covering_bound(vc: float, c4: float, n: int, eps: float) -> float:
    """Bound on the log covering number of the truncated class at scale eps.

    log 3 + 2 * vc * log(6e * c4 * log(n) / eps).  Requires eps > 0 and a
    truncation level c4 * log(n) >= 2; the regime of interest is eps < 1.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    level = c4 * math.log(n)
    if level < 2:
        raise ValueError(f"truncation level c4*log(n) must be >= 2, got {level}")
    return math.log(3.0) + 2.0 * vc * math.log(6.0 * math.e * level / eps)


@dataclass(frozen=True)
class GrowthBoundResult:
    premise_holds: bool
    conclusion_holds: bool
    preconditions_hold: bool


def growth_bound_check(R: float, m: float, w: float, L: float) -> GrowthBoundResult:
    """Evaluate the implication 2^m <= 2^L (mR/w)^w  =>  m <= L + w log2(2R log2 R).

    Both inequalities are evaluated in log2 space to avoid overflow.  The
    regime in which the implication is asserted is R >= 16 and
    m >= w >= L >= 0; violations are reported, not rejected.
    """
    preconditions = R >= 16 and m >= w >= L >= 0
    # log2 of the premise RHS, with the conventions 0^0 = 1 and 0^w = 0 (w>0)
    if w == 0:
        rhs_log2 = L
    elif m <= 0:
        rhs_log2 = -math.inf
    else:
        rhs_log2 = L + w * math.log2(m * R / w)
    premise = m <= rhs_log2
    if R <= 1:
        conclusion = m <= L
    else:
        conclusion = m <= L + w * math.log2(2.0 * R * math.log2(R))
    return GrowthBoundResult(
        premise_holds=premise,
        conclusion_holds=conclusion,
        preconditions_hold=preconditions,
    )


@dataclass(frozen=True)
class AmGmResult:
    lhs: float
    rhs: float
    log_lhs: float
    log_rhs: float
    holds: bool


def weighted_am_gm_check(x, w) -> AmGmResult:
    """Evaluate prod (x_i/w_i)^{w_i} <= ((sum x_i)/(sum w_i))^{sum w_i}.

    All entries must be positive.  The comparison is done in log space;
    the plain values are also reported (inf when they overflow).
    """
    x = [float(v) for v in x]
    w = [float(v) for v in w]
    if len(x) != len(w) or not x:
        raise ValueError("x and w must be nonempty and of equal length")
    if min(x) <= 0 or min(w) <= 0:
        raise ValueError("all entries of x and w must be positive")
    wsum = sum(w)
    log_lhs = sum(wi * (math.log(xi) - math.log(wi)) for xi, wi in zip(x, w))
    log_rhs = wsum * (math.log(sum(x)) - math.log(wsum))
    def _exp(v: float) -> float:
        try:
            return math.exp(v)
        except OverflowError:
            return math.inf
    # slack scales with the log magnitudes: equality cases reach the same
    # value through different float paths
    slack = 1e-12 * max(1.0, abs(log_lhs), abs(log_rhs))
    return AmGmResult(
        lhs=_exp(log_lhs),
        rhs=_exp(log_rhs),
        log_lhs=log_lhs,
        log_rhs=log_rhs,
        holds=log_lhs <= log_rhs + slack,
    )
