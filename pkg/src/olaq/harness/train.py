"""Desk-scale training runs: an MLP of integer linear layers on a classification set."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError, DataError
from ..igemm import audit_gemms
from ..ilinear import LayerConfig, LinearLayer, Mode
from .config import TrainConfig
from .data import Dataset, build_dataset

ALL_MODES = (Mode.FULL_PRECISION, Mode.UNTREATED, Mode.APPROACH1, Mode.APPROACH2)


@dataclass
class RunMetrics:
    mode: str
    seed: int
    epoch_loss: list = field(default_factory=list)
    epoch_accuracy: list = field(default_factory=list)
    final_accuracy: float = 0.0
    gemm_counts: dict = field(default_factory=dict)
    input_outlier_fraction: float = 0.0
    wall_clock: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)

    def deterministic_dict(self) -> dict:
        d = self.as_dict()
        d.pop("wall_clock")
        return d


class MLP:
    """Stack of :class:`LinearLayer` with ReLU between layers and softmax cross-entropy on top."""

    def __init__(self, dims, layer_config: LayerConfig, rng: np.random.Generator):
        self.layers = [LinearLayer.init(a, b, rng, layer_config) for a, b in zip(dims[:-1], dims[1:])]

    def forward(self, x):
        caches, pre = [], []
        h = x
        for i, layer in enumerate(self.layers):
            z, cache = layer.forward(h)
            caches.append(cache)
            pre.append(z)
            h = np.maximum(z, 0) if i < len(self.layers) - 1 else z
        return h, (caches, pre)

    def predict(self, x) -> np.ndarray:
        logits, _ = self.forward(x)
        return np.argmax(logits, axis=1)

    def train_step(self, x, y, lr: float) -> float:
        logits, (caches, pre) = self.forward(x)
        loss, grad = softmax_cross_entropy(logits, y)
        for i in reversed(range(len(self.layers))):
            layer = self.layers[i]
            res = layer.backward(caches[i], grad)
            if i > 0:
                grad = res.grad_input * (pre[i - 1] > 0)
            layer.sgd_step(res, lr)
        return loss


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean loss and its gradient w.r.t. the logits."""
    z = logits.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = len(labels)
    loss = -float(logp[np.arange(n), labels].mean())
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return loss, (grad / n).astype(np.float32)


def accuracy(model: MLP, x, y) -> float:
    return float(np.mean(model.predict(x) == y))


def train(config: TrainConfig, dataset: Dataset | None = None) -> RunMetrics:
    config.validate()
    start = time.perf_counter()
    data = dataset or build_dataset(config.dataset, config.seed, gamma=config.gamma)
    if data.n_features != config.dims[0]:
        raise DataError(f"dataset has {data.n_features} features but dims[0]={config.dims[0]}")
    if data.n_classes > config.dims[-1]:
        raise DataError(f"dataset has {data.n_classes} classes but dims[-1]={config.dims[-1]}")

    rng = np.random.default_rng([config.seed, 1])
    model = MLP(config.dims, LayerConfig(mode=config.mode, gamma=config.gamma), rng)
    lr = config.effective_lr
    metrics = RunMetrics(mode=config.mode.value, seed=config.seed)
    metrics.input_outlier_fraction = float(np.mean(np.abs(data.x_train) > config.gamma))

    n = len(data.x_train)
    with audit_gemms() as audit:
        for _ in range(config.epochs):
            order = rng.permutation(n)
            losses = []
            for lo in range(0, n, config.batch_size):
                idx = order[lo:lo + config.batch_size]
                losses.append(model.train_step(data.x_train[idx], data.y_train[idx], lr))
            metrics.epoch_loss.append(float(np.mean(losses)))
            metrics.epoch_accuracy.append(accuracy(model, data.x_test, data.y_test))
        metrics.final_accuracy = accuracy(model, data.x_test, data.y_test)
    metrics.gemm_counts = {str(k): v for k, v in sorted(audit.by_width.items())}
    metrics.wall_clock = time.perf_counter() - start
    if config.metrics_path:
        with open(config.metrics_path, "w") as f:
            json.dump(metrics.as_dict(), f, indent=2)
    return metrics


@dataclass
class ModeSummary:
    mode: str
    mean: float
    sd: float
    accuracies: list


def compare_modes(config: TrainConfig, seeds, modes=ALL_MODES) -> list[ModeSummary]:
    """Train every mode on every seed; one summary row per mode (sample sd, ddof=1)."""
    seeds = list(seeds)
    if len(seeds) < 2:
        raise ConfigError("compare_modes needs at least two seeds")
    rows = []
    for mode in modes:
        mode = Mode.parse(mode)
        accs = [train(config.replace(mode=mode.value, seed=s, metrics_path=None)).final_accuracy for s in seeds]
        rows.append(ModeSummary(mode.value, float(np.mean(accs)), float(np.std(accs, ddof=1)), accs))
    return rows


def format_table(rows: list[ModeSummary], delimiter: str = ",") -> str:
    lines = [delimiter.join(["mode", "mean_accuracy", "sd_accuracy", "n_seeds"])]
    for r in rows:
        lines.append(delimiter.join([r.mode, f"{r.mean:.6f}", f"{r.sd:.6f}", str(len(r.accuracies))]))
    return "\n".join(lines) + "\n"
