"""Least-squares estimation of the a posteriori probability and plug-in
classification.

``train_lsq`` minimizes the empirical squared loss (1/n) sum |y_i - f(x_i)|^2
over the composite convolutional class with Adam; ``model_select`` picks an
architecture by sample splitting (train on the first floor(4n/5) examples,
validate on the rest, retrain the winner on everything).  The fitted
estimate classifies an image as 1 iff its truncated output is >= 1/2.

The optimization loop runs on torch for throughput; weights are initialized
from and exported back to this package's own network types, whose forward
pass (tested against the torch path) is used for all prediction.  All
randomness (initialization and batch order) comes from the package RNG, so
a seed fixes the result exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import torch

from . import bounds
from .conv import CompositeNet, composite_forward_batch, init_composite
from .images import Image, LabeledDataset
from .rng import RngState


@dataclass(frozen=True)
class GridPoint:
    """One architecture in the model-selection grid.

    Filter sizes run through 2^1, ..., 2^level, each repeated `repeats`
    times, giving level*repeats convolutional layers with `conv_channels`
    channels each; the dense head has `repeats` layers of `dense_width`
    neurons; `order` convolutional networks run in parallel.
    """

    level: int
    order: int
    repeats: int
    conv_channels: int
    dense_width: int

    @property
    def conv_layers(self) -> int:
        return self.level * self.repeats

    def filter_sizes(self) -> list[int]:
        return [2**k for k in range(1, self.level + 1) for _ in range(self.repeats)]

    def channel_counts(self) -> list[int]:
        return [self.conv_channels] * self.conv_layers

    def dense_widths(self) -> list[int]:
        return [self.dense_width] * self.repeats

    def num_params(self) -> int:
        return bounds.weight_count(
            self.order,
            self.conv_layers,
            self.channel_counts(),
            self.filter_sizes(),
            self.repeats,
            self.dense_widths(),
        ).total_weights

    def label(self) -> str:
        # comma-free so the label can sit in a CSV column unquoted
        return (
            f"l={self.level} t={self.order} Ln={self.repeats} "
            f"k1={self.conv_channels} k2={self.dense_width}"
        )


def desk_grid() -> list[GridPoint]:
    """Reduced grid for desk-scale runs (minutes, not hours)."""
    return [
        GridPoint(level, order, 1, k1, 5)
        for level in (2, 3)
        for order in (1, 2)
        for k1 in (2, 4)
    ]


def full_grid() -> list[GridPoint]:
    """The full model-selection grid."""
    return [
        GridPoint(level, order, repeats, k1, k2)
        for level in (2, 3, 4)
        for order in (1, 2)
        for repeats in (1, 2, 3)
        for k1 in (2, 4, 8)
        for k2 in (5, 10)
    ]


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and selection settings."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 200
    batch_size: int = 32
    c4: float = 1.0
    param_cap: int | None = None  # None: size of the dataset being fitted
    seed: int = 0
    workers: int = 1


class CapacityError(ValueError):
    """Architecture exceeds the trainable-parameter cap."""


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during optimization."""


@dataclass
class FittedEstimate:
    """Trained estimate of the a posteriori probability plus metadata."""

    net: CompositeNet
    truncation: float
    grid_point: GridPoint
    epoch_losses: list[float]
    selection: list[dict] = field(default_factory=list)

    def predict_proba_batch(self, images) -> np.ndarray:
        batch = np.stack([img.pixels for img in images])
        raw = composite_forward_batch(self.net, batch)
        return np.clip(raw, -self.truncation, self.truncation)

    def classify_batch(self, images) -> np.ndarray:
        return (self.predict_proba_batch(images) >= 0.5).astype(int)

    def classify(self, img: Image) -> int:
        return int(self.classify_batch([img])[0])


@dataclass(frozen=True)
class ConstantClassifier:
    """Baseline that always predicts one class."""

    label: int

    def classify_batch(self, images) -> np.ndarray:
        return np.full(len(images), self.label, dtype=int)

    def classify(self, img: Image) -> int:
        return self.label


def majority_baseline(ds: LabeledDataset) -> ConstantClassifier:
    """Constant classifier predicting the training majority class (ties: 1)."""
    return ConstantClassifier(label=int(ds.label_frequency() >= 0.5))


def truncation_level(n: int, c4: float) -> float:
    """Truncation level max(1, c4 * log n); staying >= 1 keeps the
    classification threshold decision unchanged."""
    return max(1.0, c4 * math.log(n))


def plugin_classify(est: FittedEstimate, img: Image) -> int:
    """1 iff the truncated probability estimate is >= 1/2 (boundary
    inclusive)."""
    return est.classify(img)


def empirical_risk(clf, test: LabeledDataset) -> float:
    """Fraction of test examples the classifier labels incorrectly."""
    pred = np.asarray(clf.classify_batch(list(test.images)))
    truth = np.asarray(test.labels)
    return float(np.mean(pred != truth))


class _TorchComposite(torch.nn.Module):
    """Torch mirror of a CompositeNet for optimization."""

    def __init__(self, net: CompositeNet):
        super().__init__()
        self.filter_sizes = list(net.conv_nets[0].filter_sizes)
        self.conv_weights = torch.nn.ParameterList()
        self.conv_biases = torch.nn.ParameterList()
        self.conv_out = torch.nn.ParameterList()
        for conv in net.conv_nets:
            for w in conv.filters:
                # (M, M, k_in, k_out) -> conv2d layout (k_out, k_in, M, M)
                self.conv_weights.append(
                    torch.nn.Parameter(torch.tensor(
                        w.transpose(3, 2, 0, 1), dtype=torch.float32))
                )
            for b in conv.biases:
                self.conv_biases.append(
                    torch.nn.Parameter(torch.tensor(b, dtype=torch.float32))
                )
            self.conv_out.append(
                torch.nn.Parameter(torch.tensor(conv.out_weights, dtype=torch.float32))
            )
        self.order = len(net.conv_nets)
        self.layers = len(self.filter_sizes)
        self.head_weights = torch.nn.ParameterList(
            torch.nn.Parameter(torch.tensor(w, dtype=torch.float32))
            for w in net.head.hidden_weights
        )
        self.head_biases = torch.nn.ParameterList(
            torch.nn.Parameter(torch.tensor(b, dtype=torch.float32))
            for b in net.head.hidden_biases
        )
        self.head_out = torch.nn.Parameter(
            torch.tensor(net.head.out_weights, dtype=torch.float32)
        )
        self.head_out_bias = torch.nn.Parameter(
            torch.tensor(net.head.out_bias, dtype=torch.float32)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (B, d1, d2) -> (B,)
        d1, d2 = x.shape[1], x.shape[2]
        pooled = []
        for b in range(self.order):
            act = x.unsqueeze(1)
            for r in range(self.layers):
                m = self.filter_sizes[r]
                w = self.conv_weights[b * self.layers + r]
                bias = self.conv_biases[b * self.layers + r]
                act = torch.nn.functional.pad(act, (0, m - 1, 0, m - 1))
                act = torch.relu(torch.nn.functional.conv2d(act, w, bias))
            z = (act * self.conv_out[b][None, :, None, None]).sum(dim=1)
            m_last = self.filter_sizes[-1]
            z = z[:, : d1 - m_last + 1, : d2 - m_last + 1]
            pooled.append(z.flatten(1).max(dim=1).values)
        a = torch.stack(pooled, dim=1)
        for w, bias in zip(self.head_weights, self.head_biases):
            a = torch.relu(a @ w.T + bias)
        return a @ self.head_out + self.head_out_bias

    def export(self, template: CompositeNet) -> CompositeNet:
        """Copy trained parameters back into a (copied) CompositeNet."""
        out = template.copy()
        for b, conv in enumerate(out.conv_nets):
            for r in range(self.layers):
                w = self.conv_weights[b * self.layers + r].detach().numpy()
                conv.filters[r][:] = w.transpose(2, 3, 1, 0).astype(np.float64)
                conv.biases[r][:] = (
                    self.conv_biases[b * self.layers + r].detach().numpy()
                )
            conv.out_weights[:] = self.conv_out[b].detach().numpy()
        for r, (w, bias) in enumerate(zip(self.head_weights, self.head_biases)):
            out.head.hidden_weights[r][:] = w.detach().numpy()
            out.head.hidden_biases[r][:] = bias.detach().numpy()
        out.head.out_weights[:] = self.head_out.detach().numpy()
        out.head.out_bias = float(self.head_out_bias.detach().numpy())
        return out


def build_composite(point: GridPoint, rng: RngState) -> CompositeNet:
    return init_composite(
        point.order,
        point.channel_counts(),
        point.filter_sizes(),
        point.dense_widths(),
        rng,
    )


def train_lsq(
    ds: LabeledDataset, point: GridPoint, cfg: TrainConfig
) -> FittedEstimate:
    """Fit the composite class at one grid point by Adam on the squared loss.

    Deterministic given cfg.seed; raises CapacityError when the architecture
    exceeds the parameter cap and TrainingDivergedError on a non-finite loss.
    """
    cap = cfg.param_cap if cfg.param_cap is not None else len(ds)
    n_params = point.num_params()
    if n_params > cap:
        raise CapacityError(
            f"{point.label()} has {n_params} parameters, over the cap {cap}"
        )
    torch.set_num_threads(1)
    rng = RngState(cfg.seed)
    template = build_composite(point, rng)
    model = _TorchComposite(template)
    xs = torch.tensor(
        np.stack([img.pixels for img in ds.images]), dtype=torch.float32
    )
    ys = torch.tensor(np.asarray(ds.labels), dtype=torch.float32)
    opt = torch.optim.Adam(
        model.parameters(),
        lr=cfg.learning_rate,
        betas=(cfg.beta1, cfg.beta2),
        eps=cfg.eps,
    )
    n = len(ds)
    losses: list[float] = []
    for _epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            pred = model(xs[idx])
            loss = ((ys[idx] - pred) ** 2).mean()
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
        epoch_loss = total / n
        if not math.isfinite(epoch_loss):
            raise TrainingDivergedError(
                f"loss became {epoch_loss} at epoch {_epoch} for {point.label()}"
            )
        losses.append(epoch_loss)
    return FittedEstimate(
        net=model.export(template),
        truncation=truncation_level(n, cfg.c4),
        grid_point=point,
        epoch_losses=losses,
    )


def model_select(
    ds: LabeledDataset, cfg: TrainConfig, grid: list[GridPoint] | None = None
) -> FittedEstimate:
    """Sample-splitting selection: train each admissible grid point on the
    first floor(4n/5) examples, validate on the rest, retrain the winner on
    all n.

    Ties keep the earliest point in grid order.  Each grid point trains from
    its own derived seed, so concurrent execution cannot change the result.
    """
    if len(ds) < 5:
        raise ValueError(f"model selection needs n >= 5, got {len(ds)}")
    grid = list(grid) if grid is not None else desk_grid()
    n_train = (4 * len(ds)) // 5
    train_ds = ds.subset(range(n_train))
    val_ds = ds.subset(range(n_train, len(ds)))
    cap = cfg.param_cap if cfg.param_cap is not None else len(ds)
    base = RngState(cfg.seed)

    admissible = [
        (idx, point) for idx, point in enumerate(grid) if point.num_params() <= cap
    ]
    if not admissible:
        raise CapacityError(
            f"no grid point fits the parameter cap {cap} (grid size {len(grid)})"
        )

    def _run(entry):
        idx, point = entry
        point_cfg = replace(
            cfg, param_cap=cap, seed=base.derive(idx).seed, workers=1
        )
        est = train_lsq(train_ds, point, point_cfg)
        return idx, point, empirical_risk(est, val_ds)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run, admissible))
    else:
        results = [_run(entry) for entry in admissible]
    results.sort(key=lambda r: r[0])

    best_idx, best_point, _ = min(results, key=lambda r: (r[2], r[0]))
    final_cfg = replace(
        cfg, param_cap=cap, seed=base.derive(best_idx).seed, workers=1
    )
    final = train_lsq(ds, best_point, final_cfg)
    final.selection = [
        {
            "grid_index": idx,
            "point": point.label(),
            "params": point.num_params(),
            "val_risk": risk,
            "winner": idx == best_idx,
        }
        for idx, point, risk in results
    ]
    return final
