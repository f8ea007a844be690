"""Image and dataset domain types, truncation, and dataset CSV IO.

Conventions used throughout the package:

* An image is a grid of grey values in [0, 1] indexed by (i, j) with
  i in {1, ..., d1} and j in {1, ..., d2}.  Public APIs that take grid
  positions use this 1-based convention; storage is a 0-based numpy array
  of shape (d1, d2) with ``pixels[i-1, j-1]`` holding position (i, j).
* Dataset CSV format: first line ``d1,d2``; each following line
  ``label,p_1_1,p_1_2,...,p_d1_d2`` with pixels in row-major order
  (j varies fastest), '.' as the decimal separator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_CLAMP_EPS = 1e-12


def truncate(z: float, beta: float) -> float:
    """Clamp z to the interval [-beta, beta].

    beta must be positive.
    """
    if not beta > 0:
        raise ValueError(f"truncation level must be positive, got {beta}")
    return max(-beta, min(beta, z))


@dataclass(frozen=True)
class Image:
    """A d1 x d2 grid of grey values in [0, 1].

    ``pixels[i-1, j-1]`` is the grey value at grid position (i, j).
    The pixel array is frozen to keep instances safe for concurrent reads.
    """

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"pixels must be a 2D array, got shape {arr.shape}")
        d1, d2 = arr.shape
        if d1 <= 1 or d2 <= 1:
            raise ValueError(f"image dimensions must exceed 1, got {d1}x{d2}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("pixels must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError(
                f"pixels must lie in [0,1], found range "
                f"[{arr.min()}, {arr.max()}]"
            )
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)

    @property
    def d1(self) -> int:
        return self.pixels.shape[0]

    @property
    def d2(self) -> int:
        return self.pixels.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Image):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )


def subimage(img: Image, offset: tuple[int, int], extent: tuple[int, int]) -> np.ndarray:
    """Pixel block of shape `extent` anchored at the 1-based position `offset`.

    The block covers grid positions (i, j) + {0..ni-1} x {0..nj-1} and must
    lie entirely inside the image.
    """
    i, j = offset
    ni, nj = extent
    if ni < 1 or nj < 1:
        raise ValueError(f"extent must be positive, got {extent}")
    if i < 1 or j < 1 or i + ni - 1 > img.d1 or j + nj - 1 > img.d2:
        raise ValueError(
            f"block {extent} at offset {offset} leaves the "
            f"{img.d1}x{img.d2} grid"
        )
    return img.pixels[i - 1 : i - 1 + ni, j - 1 : j - 1 + nj]


@dataclass(frozen=True)
class LabeledDataset:
    """Images of identical dimensions paired with binary labels."""

    images: tuple[Image, ...]
    labels: tuple[int, ...]

    def __post_init__(self):
        images = tuple(self.images)
        labels = tuple(int(y) for y in self.labels)
        if len(images) != len(labels):
            raise ValueError(
                f"{len(images)} images but {len(labels)} labels"
            )
        if len(images) == 0:
            raise ValueError("dataset must contain at least one example")
        d1, d2 = images[0].d1, images[0].d2
        for idx, img in enumerate(images):
            if (img.d1, img.d2) != (d1, d2):
                raise ValueError(
                    f"image {idx} has dimensions {img.d1}x{img.d2}, "
                    f"expected {d1}x{d2}"
                )
        for idx, y in enumerate(labels):
            if y not in (0, 1):
                raise ValueError(f"label {y} at index {idx} is not in {{0,1}}")
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.images)

    @property
    def d1(self) -> int:
        return self.images[0].d1

    @property
    def d2(self) -> int:
        return self.images[0].d2

    def subset(self, indices) -> "LabeledDataset":
        return LabeledDataset(
            images=tuple(self.images[k] for k in indices),
            labels=tuple(self.labels[k] for k in indices),
        )

    def label_frequency(self) -> float:
        """Fraction of examples with label 1."""
        return sum(self.labels) / len(self.labels)


class DatasetFormatError(ValueError):
    """Malformed dataset file; message carries the offending row number."""


def _parse_pixel(token: str, row: int) -> float:
    try:
        v = float(token)
    except ValueError:
        raise DatasetFormatError(f"row {row}: pixel value {token!r} is not a number")
    if v < -_CLAMP_EPS or v > 1.0 + _CLAMP_EPS:
        raise DatasetFormatError(f"row {row}: pixel value {v} outside [0,1]")
    return min(1.0, max(0.0, v))


def save_dataset(ds: LabeledDataset, path) -> None:
    """Write the dataset in the package CSV format.

    Floats are written with shortest round-trip representation, so a
    save/load cycle reproduces pixel values exactly.
    """
    lines = [f"{ds.d1},{ds.d2}"]
    for img, y in zip(ds.images, ds.labels):
        flat = img.pixels.ravel()
        lines.append(str(y) + "," + ",".join(repr(float(v)) for v in flat))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_dataset(path) -> LabeledDataset:
    """Read a dataset in the package CSV format.

    Raises DatasetFormatError with the row number for a malformed header,
    wrong column count, pixel outside [0,1], or non-binary label.
    """
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise DatasetFormatError("row 1: empty file")
    header = lines[0].split(",")
    if len(header) != 2:
        raise DatasetFormatError(f"row 1: header must be 'd1,d2', got {lines[0]!r}")
    try:
        d1, d2 = int(header[0]), int(header[1])
    except ValueError:
        raise DatasetFormatError(f"row 1: header must be 'd1,d2', got {lines[0]!r}")
    if d1 <= 1 or d2 <= 1:
        raise DatasetFormatError(f"row 1: dimensions must exceed 1, got {d1}x{d2}")
    images: list[Image] = []
    labels: list[int] = []
    for row, line in enumerate(lines[1:], start=2):
        tokens = line.split(",")
        if len(tokens) != 1 + d1 * d2:
            raise DatasetFormatError(
                f"row {row}: expected {1 + d1 * d2} columns for a "
                f"{d1}x{d2} image, got {len(tokens)}"
            )
        if tokens[0] not in ("0", "1"):
            raise DatasetFormatError(
                f"row {row}: label {tokens[0]!r} is not 0 or 1"
            )
        pixels = np.array(
            [_parse_pixel(tok, row) for tok in tokens[1:]], dtype=np.float64
        ).reshape(d1, d2)
        images.append(Image(pixels))
        labels.append(int(tokens[0]))
    if not images:
        raise DatasetFormatError("row 2: file contains no examples")
    return LabeledDataset(images=tuple(images), labels=tuple(labels))
