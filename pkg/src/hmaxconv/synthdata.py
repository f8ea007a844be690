"""Synthetic shape-image classification tasks.

Task 1: three objects per 32x32 image, each independently a circle with
probability 1 - 0.5^(1/3) or a square / equilateral triangle with
probability 0.5^(1/3)/2 each; grey levels are a random permutation of
(1/3, 2/3, 1); the label is 1 iff the image contains a circle.  The kind
probabilities make P(no circle) = ((2/2) * 0.5^(1/3))^3 = 0.5 exactly.

Task 2: two objects, circle or triangle with probability 1/2 each, greys a
permutation of (1/2, 1); the label is 1 iff both kinds are equal, so
P(label 1) = 2 * 0.25 = 0.5.

Placement is sequential: positions are uniform over centers keeping the
object fully inside the image, re-drawing the position (kind, area, and
rotation are kept) while the new object covers more than one percent of any
earlier object's area.  Objects are rasterized by pixel-center containment,
later objects overwriting earlier ones; the background is 0.

Geometry lives in continuous coordinates [0, d1] x [0, d2], where the first
axis runs along the first pixel index i and pixel (i, j) covers the unit
square with center (i - 0.5, j - 0.5).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .images import Image, LabeledDataset
from .rng import RngState

P_CIRCLE_TASK1 = 1.0 - 0.5 ** (1.0 / 3.0)
GREYS_TASK1 = (1.0 / 3.0, 2.0 / 3.0, 1.0)
GREYS_TASK2 = (0.5, 1.0)


@dataclass(frozen=True)
class ShapeInstance:
    """One placed geometric object."""

    kind: str                    # "circle", "square", or "triangle"
    center: tuple[float, float]  # continuous (x, y); x along i, y along j
    area: float
    rotation: float              # radians; ignored for circles
    grey: float

    def __post_init__(self):
        if self.kind not in ("circle", "square", "triangle"):
            raise ValueError(f"unknown shape kind {self.kind!r}")
        if self.area <= 0:
            raise ValueError(f"area must be positive, got {self.area}")
        if not 0.0 < self.grey <= 1.0:
            raise ValueError(f"grey must be in (0, 1], got {self.grey}")


def _triangle_vertices(shape: ShapeInstance) -> np.ndarray:
    """Vertices of the equilateral triangle, shape (3, 2)."""
    side = math.sqrt(4.0 * shape.area / math.sqrt(3.0))
    radius = side / math.sqrt(3.0)
    angles = shape.rotation + np.pi / 2.0 + np.array([0.0, 2.0, 4.0]) * np.pi / 3.0
    cx, cy = shape.center
    return np.stack([cx + radius * np.cos(angles), cy + radius * np.sin(angles)], axis=1)


def contains(shape: ShapeInstance, points: np.ndarray) -> np.ndarray:
    """Boolean mask of which (N, 2) points lie inside the shape's region."""
    points = np.asarray(points, dtype=np.float64)
    dx = points[:, 0] - shape.center[0]
    dy = points[:, 1] - shape.center[1]
    if shape.kind == "circle":
        r2 = shape.area / math.pi
        return dx * dx + dy * dy <= r2
    if shape.kind == "square":
        half = math.sqrt(shape.area) / 2.0
        c, s = math.cos(shape.rotation), math.sin(shape.rotation)
        u = dx * c + dy * s
        v = -dx * s + dy * c
        return (np.abs(u) <= half) & (np.abs(v) <= half)
    verts = _triangle_vertices(shape)
    inside = np.ones(len(points), dtype=bool)
    for m in range(3):
        a, b = verts[m], verts[(m + 1) % 3]
        edge = b - a
        cross = edge[0] * (points[:, 1] - a[1]) - edge[1] * (points[:, 0] - a[0])
        inside &= cross >= 0.0
    return inside


def half_extent(shape: ShapeInstance) -> tuple[float, float]:
    """Half-width of the shape's bounding box along each axis."""
    if shape.kind == "circle":
        r = math.sqrt(shape.area / math.pi)
        return r, r
    if shape.kind == "square":
        half = math.sqrt(shape.area) / 2.0
        c, s = abs(math.cos(shape.rotation)), abs(math.sin(shape.rotation))
        return half * (c + s), half * (c + s)
    verts = _triangle_vertices(shape)
    cx, cy = shape.center
    return (
        float(np.max(np.abs(verts[:, 0] - cx))),
        float(np.max(np.abs(verts[:, 1] - cy))),
    )


def _check_inside(shape: ShapeInstance, d1: int, d2: int) -> None:
    ex, ey = half_extent(shape)
    cx, cy = shape.center
    if cx - ex < 0 or cx + ex > d1 or cy - ey < 0 or cy + ey > d2:
        raise ValueError(
            f"{shape.kind} at {shape.center} with area {shape.area:.2f} "
            f"leaves the {d1}x{d2} image"
        )


def rasterize(shapes: list[ShapeInstance], d1: int, d2: int) -> Image:
    """Image with grey 0 background; a pixel takes the grey of the last
    shape whose region contains its center."""
    xs = np.arange(d1) + 0.5
    ys = np.arange(d2) + 0.5
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    centers = np.stack([gx.ravel(), gy.ravel()], axis=1)
    pixels = np.zeros(d1 * d2)
    for shape in shapes:
        _check_inside(shape, d1, d2)
        pixels[contains(shape, centers)] = shape.grey
    return Image(pixels.reshape(d1, d2))


def area_overlap_fraction(
    s_new: ShapeInstance, s_old: ShapeInstance, samples_per_pixel: int = 4
) -> float:
    """Fraction of s_old's area covered by s_new, estimated by containment
    on a supersampled grid (samples_per_pixel^2 points per unit pixel)."""
    ex, ey = half_extent(s_old)
    x0, x1 = math.floor(s_old.center[0] - ex), math.ceil(s_old.center[0] + ex)
    y0, y1 = math.floor(s_old.center[1] - ey), math.ceil(s_old.center[1] + ey)
    step = 1.0 / samples_per_pixel
    xs = np.arange(x0, x1, step) + step / 2.0
    ys = np.arange(y0, y1, step) + step / 2.0
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    points = np.stack([gx.ravel(), gy.ravel()], axis=1)
    in_old = contains(s_old, points)
    n_old = int(in_old.sum())
    if n_old == 0:
        return 0.0
    in_both = in_old & contains(s_new, points)
    return float(in_both.sum()) / n_old


@dataclass(frozen=True)
class TaskConfig:
    """Generation parameters for one synthetic dataset."""

    task: int
    n: int
    seed: int
    d1: int = 32
    d2: int = 32
    area_lo: float = 16.0
    area_hi: float = 64.0
    max_overlap: float = 0.01
    max_retries: int = 10_000

    def __post_init__(self):
        if self.task not in (1, 2):
            raise ValueError(f"task must be 1 or 2, got {self.task}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not 0 < self.area_lo < self.area_hi:
            raise ValueError(
                f"need 0 < area_lo < area_hi, got [{self.area_lo}, {self.area_hi}]"
            )


def _place_objects(
    cfg: TaskConfig,
    kinds: list[str],
    greys: list[float],
    rng: RngState,
    image_index: int,
) -> list[ShapeInstance]:
    """Sequential placement; only the position is re-drawn on overlap."""
    placed: list[ShapeInstance] = []
    for kind, grey in zip(kinds, greys):
        area = rng.uniform(cfg.area_lo, cfg.area_hi)
        rotation = rng.uniform(0.0, 2.0 * math.pi)
        probe = ShapeInstance(kind=kind, center=(0.0, 0.0), area=area,
                              rotation=rotation, grey=grey)
        ex, ey = half_extent(probe)
        if 2 * ex > cfg.d1 or 2 * ey > cfg.d2:
            raise RuntimeError(
                f"image {image_index} (seed {cfg.seed}): {kind} of area "
                f"{area:.1f} cannot fit a {cfg.d1}x{cfg.d2} image"
            )
        for attempt in range(cfg.max_retries + 1):
            center = (
                rng.uniform(ex, cfg.d1 - ex),
                rng.uniform(ey, cfg.d2 - ey),
            )
            shape = ShapeInstance(kind=kind, center=center, area=area,
                                  rotation=rotation, grey=grey)
            if all(
                area_overlap_fraction(shape, old) <= cfg.max_overlap
                for old in placed
            ):
                placed.append(shape)
                break
        else:
            raise RuntimeError(
                f"image {image_index} (seed {cfg.seed}): placement retries "
                f"exhausted after {cfg.max_retries} attempts"
            )
    return placed


def sample_task1_image(
    cfg: TaskConfig, rng: RngState, image_index: int = 0
) -> tuple[list[ShapeInstance], int]:
    """Shapes and label of one task-1 image."""
    probs = (P_CIRCLE_TASK1, (1.0 - P_CIRCLE_TASK1) / 2.0, (1.0 - P_CIRCLE_TASK1) / 2.0)
    names = ("circle", "square", "triangle")
    kinds = [names[rng.choice_weighted(probs)] for _ in range(3)]
    greys = list(GREYS_TASK1)
    rng.shuffle(greys)
    shapes = _place_objects(cfg, kinds, greys, rng, image_index)
    label = int(any(k == "circle" for k in kinds))
    return shapes, label


def sample_task2_image(
    cfg: TaskConfig, rng: RngState, image_index: int = 0
) -> tuple[list[ShapeInstance], int]:
    """Shapes and label of one task-2 image."""
    names = ("circle", "triangle")
    kinds = [names[rng.below(2)] for _ in range(2)]
    greys = list(GREYS_TASK2)
    rng.shuffle(greys)
    shapes = _place_objects(cfg, kinds, greys, rng, image_index)
    label = int(kinds[0] == kinds[1])
    return shapes, label


def _generate(cfg: TaskConfig, rng: RngState, sampler) -> LabeledDataset:
    images = []
    labels = []
    for idx in range(cfg.n):
        shapes, label = sampler(cfg, rng.derive(idx), idx)
        images.append(rasterize(shapes, cfg.d1, cfg.d2))
        labels.append(label)
    return LabeledDataset(images=tuple(images), labels=tuple(labels))


def gen_task1(cfg: TaskConfig, rng: RngState) -> LabeledDataset:
    """Task-1 dataset; image i is drawn from the child stream rng.derive(i)."""
    if cfg.task != 1:
        raise ValueError(f"config is for task {cfg.task}, not task 1")
    return _generate(cfg, rng, sample_task1_image)


def gen_task2(cfg: TaskConfig, rng: RngState) -> LabeledDataset:
    """Task-2 dataset; image i is drawn from the child stream rng.derive(i)."""
    if cfg.task != 2:
        raise ValueError(f"config is for task {cfg.task}, not task 2")
    return _generate(cfg, rng, sample_task2_image)


def generate_dataset(cfg: TaskConfig) -> LabeledDataset:
    """Dataset for cfg.task seeded from cfg.seed."""
    rng = RngState(cfg.seed)
    return gen_task1(cfg, rng) if cfg.task == 1 else gen_task2(cfg, rng)


def save_pgm(img: Image, path) -> None:
    """Plain PGM (P2) export with grey levels scaled to 0..255."""
    lines = ["P2", f"{img.d1} {img.d2}", "255"]
    for j in range(img.d2):
        lines.append(" ".join(str(round(img.pixels[i, j] * 255)) for i in range(img.d1)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
