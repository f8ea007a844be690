"""Hierarchical max-pooling image functions and their evaluators.

A :class:`HierTree` of level ``l`` combines the values of a 2^l x 2^l patch
bottom-up: each node is a function of four arguments applied to the values
of the four quadrant sub-functions, down to leaf nodes applied to 2x2 pixel
blocks.  A max-pooling evaluation slides the patch function over every
position of an image and takes the maximum.  A :class:`HierarchyModel`
applies an outer function to several such max-pooled values.

Node functions are opaque callables with declared domain [-2, 2]^4.  For
true models their range is [0, 1]; constructors for the common node kinds
are provided below.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .images import Image

Node = Callable[[float, float, float, float], float]


@dataclass(frozen=True)
class HierTree:
    """Level-l tree of 4-ary node functions.

    ``nodes[(k, s)]`` for k = 1..level and s = 1..4^(level-k) is the node
    combining the four scale-(k-1) quadrant values; the node count is
    (4^level - 1) / 3.  The children of node (k, s) are (k-1, 4(s-1)+m)
    for m = 1..4.
    """

    level: int
    nodes: dict[tuple[int, int], Node]

    def __post_init__(self):
        if self.level < 1:
            raise ValueError(f"level must be >= 1, got {self.level}")
        expected = {
            (k, s)
            for k in range(1, self.level + 1)
            for s in range(1, 4 ** (self.level - k) + 1)
        }
        if set(self.nodes.keys()) != expected:
            missing = expected - set(self.nodes.keys())
            extra = set(self.nodes.keys()) - expected
            raise ValueError(
                f"node index set mismatch: missing {sorted(missing)}, "
                f"extra {sorted(extra)}"
            )

    @property
    def patch_side(self) -> int:
        return 2**self.level


@dataclass(frozen=True)
class HierarchyModel:
    """Outer function applied to the max-pooled values of several trees.

    All trees must share one level; the sliding index set is the square
    {0, ..., 2^level - 1}^2.
    """

    trees: tuple[HierTree, ...]
    outer: Callable[..., float]

    def __post_init__(self):
        trees = tuple(self.trees)
        if not trees:
            raise ValueError("model needs at least one tree")
        if len({t.level for t in trees}) != 1:
            raise ValueError("all trees must share the same level")
        object.__setattr__(self, "trees", trees)

    @property
    def order(self) -> int:
        return len(self.trees)

    @property
    def level(self) -> int:
        return self.trees[0].level


@dataclass(frozen=True)
class SmoothnessSpec:
    """Recorded smoothness metadata (p1, C1) for nodes and (p2, C2) for the
    outer function.  Stored for bookkeeping, not enforced."""

    p1: float
    p2: float
    c1: float
    c2: float

    def __post_init__(self):
        if self.p1 < 1 or self.p2 < 1:
            raise ValueError(f"p1 and p2 must be >= 1, got {self.p1}, {self.p2}")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError(f"C1 and C2 must be positive, got {self.c1}, {self.c2}")


def eval_tree(tree: HierTree, patch: np.ndarray, dtype=np.float64) -> float:
    """Evaluate the tree's root function on a square patch of side 2^level.

    ``patch[a, b]`` holds the value at patch position (a+1, b+1); quadrant
    order at every node is: both indices low, first index high, second
    index high, both high.
    """
    patch = np.asarray(patch, dtype=dtype)
    side = tree.patch_side
    if patch.shape != (side, side):
        raise ValueError(
            f"level-{tree.level} tree needs a {side}x{side} patch, "
            f"got shape {patch.shape}"
        )
    if not np.all(np.isfinite(patch)):
        raise ValueError("patch entries must be finite")

    def _eval(k: int, s: int, block: np.ndarray) -> float:
        if k == 1:
            return tree.nodes[(1, s)](block[0, 0], block[0, 1], block[1, 0], block[1, 1])
        h = 2 ** (k - 1)
        return tree.nodes[(k, s)](
            _eval(k - 1, 4 * (s - 1) + 1, block[:h, :h]),
            _eval(k - 1, 4 * (s - 1) + 2, block[h:, :h]),
            _eval(k - 1, 4 * (s - 1) + 3, block[:h, h:]),
            _eval(k - 1, 4 * s, block[h:, h:]),
        )

    return _eval(tree.level, 1, patch)


def eval_maxpool(tree: HierTree, img: Image, dtype=np.float64) -> float:
    """Maximum of the tree function over all patch positions inside the image.

    Positions are the 1-based offsets (i, j) with the 2^level square block
    fully inside the grid; ties take the first value in row-major (i, j)
    order (the returned maximum is unaffected).
    """
    side = tree.patch_side
    if side > min(img.d1, img.d2):
        raise ValueError(
            f"patch side {side} exceeds image dimensions {img.d1}x{img.d2}"
        )
    pixels = np.asarray(img.pixels, dtype=dtype)
    best = None
    for i in range(img.d1 - side + 1):
        for j in range(img.d2 - side + 1):
            v = eval_tree(tree, pixels[i : i + side, j : j + side], dtype=dtype)
            if best is None or v > best:
                best = v
    return best


def eval_model(model: HierarchyModel, img: Image, dtype=np.float64) -> float:
    """Outer function applied to the max-pooled value of each tree."""
    pooled = [eval_maxpool(tree, img, dtype=dtype) for tree in model.trees]
    return model.outer(*pooled)


def model_deviation_bound(
    order: int, level: int, lipschitz: float, node_dev: float, outer_dev: float
) -> float:
    """Worst-case output difference of two models with deviating functions.

    For two models whose node functions and outer function differ by at most
    node_dev and outer_dev in sup norm on the relevant domains, and whose
    exact counterparts are Lipschitz with constant `lipschitz`, the outputs
    differ by at most sqrt(order) * (2*lipschitz + 1)^level * max(devs).
    """
    if order < 1 or level < 1:
        raise ValueError(f"order and level must be >= 1, got {order}, {level}")
    if lipschitz <= 0:
        raise ValueError(f"Lipschitz constant must be positive, got {lipschitz}")
    if node_dev < 0 or outer_dev < 0:
        raise ValueError(
            f"deviations must be nonnegative, got {node_dev}, {outer_dev}"
        )
    return (
        np.sqrt(order) * (2.0 * lipschitz + 1.0) ** level * max(node_dev, outer_dev)
    )


def node_sup_deviation(
    f: Callable[..., float],
    g: Callable[..., float],
    arity: int,
    lo: float = -2.0,
    hi: float = 2.0,
    points_per_axis: int = 7,
) -> float:
    """Estimate sup |f - g| on [lo, hi]^arity by a dense grid."""
    axes = [np.linspace(lo, hi, points_per_axis)] * arity
    worst = 0.0
    grids = np.meshgrid(*axes, indexing="ij")
    flat = np.stack([grid.ravel() for grid in grids], axis=1)
    for row in flat:
        worst = max(worst, abs(f(*row) - g(*row)))
    return worst


# -- node constructors --------------------------------------------------------


def constant_node(value: float) -> Node:
    return lambda *args: value


def mean_node() -> Node:
    return lambda a, b, c, d: (a + b + c + d) / 4.0


def max_node() -> Node:
    return lambda a, b, c, d: max(a, b, c, d)


def product_node() -> Node:
    return lambda a, b, c, d: a * b * c * d


def affine_node(coeffs, bias: float = 0.0) -> Node:
    w = [float(c) for c in coeffs]
    if len(w) != 4:
        raise ValueError(f"affine node needs 4 coefficients, got {len(w)}")
    return lambda a, b, c, d: w[0] * a + w[1] * b + w[2] * c + w[3] * d + bias


def clamped_affine_node(coeffs, bias: float = 0.0, shift: float = 0.0) -> Node:
    """Affine map clamped to [0, 1], then shifted; Lipschitz constant is the
    Euclidean norm of the coefficients."""
    base = affine_node(coeffs, bias)
    return lambda a, b, c, d: min(1.0, max(0.0, base(a, b, c, d))) + shift
