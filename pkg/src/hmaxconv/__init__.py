"""Hierarchical max-pooling image functions, convolutional networks that
compute them exactly, synthetic shape benchmarks, and capacity bounds."""

__version__ = "0.1.0"

from .images import Image, LabeledDataset, load_dataset, save_dataset, subimage, truncate
from .rng import RngState

__all__ = [
    "Image",
    "LabeledDataset",
    "RngState",
    "load_dataset",
    "save_dataset",
    "subimage",
    "truncate",
    "__version__",
]
