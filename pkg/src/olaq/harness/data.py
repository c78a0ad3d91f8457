"""Synthetic Gaussian classification data with injected outlier features, and CSV ingestion."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from .config import SyntheticSpec


@dataclass
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    n_classes: int
    outlier_columns: np.ndarray

    @property
    def n_features(self) -> int:
        return self.x_train.shape[1]


def synth_dataset(spec: SyntheticSpec, seed: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw ``(features, labels, outlier_columns)``.

    Class ``c`` has mean vector with entries ``+-spec.mean``; with two classes
    the means are exact negatives.  Injected columns get a fixed ``+-scale``
    offset, mimicking activation channels that sit far outside the bulk.
    The random stream does not depend on the injection settings.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    d, k = spec.n_features, spec.n_classes
    means = rng.choice([-spec.mean, spec.mean], size=(k, d))
    if k == 2:
        means[1] = -means[0]
    labels = rng.integers(0, k, size=spec.n_samples)
    x = means[labels] + spec.noise * rng.standard_normal((spec.n_samples, d))
    cols = np.sort(rng.choice(d, size=spec.injection.columns, replace=False))
    signs = rng.choice([-1.0, 1.0], size=cols.size)
    if spec.injection.active:
        x[:, cols] += spec.injection.scale * signs
    else:
        cols = cols[:0]
    return x.astype(np.float32), labels.astype(np.int64), cols


def split(x: np.ndarray, y: np.ndarray, test_fraction: float, seed: int) -> tuple:
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(x))
    n_test = max(1, int(round(len(x) * test_fraction)))
    test, train = order[:n_test], order[n_test:]
    if train.size == 0:
        raise DataError("no samples left for training")
    return x[train], y[train], x[test], y[test]


def load_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a CSV with a header row; the ``label`` column holds class labels."""
    try:
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    if len(rows) < 2:
        raise DataError(f"{path}: need a header row and at least one data row")
    header = [h.strip() for h in rows[0]]
    if "label" not in header:
        raise DataError(f"{path}: no 'label' column")
    li = header.index("label")
    raw_labels, feats = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        raw_labels.append(row[li].strip())
        try:
            feats.append([float(v) for i, v in enumerate(row) if i != li])
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric feature") from None
    x = np.asarray(feats, dtype=np.float32)
    if not np.all(np.isfinite(x)):
        raise DataError(f"{path}: non-finite feature values")
    classes = sorted(set(raw_labels), key=lambda s: (not _is_int(s), int(s) if _is_int(s) else 0, s))
    index = {c: i for i, c in enumerate(classes)}
    return x, np.asarray([index[v] for v in raw_labels], dtype=np.int64)


def _is_int(s: str) -> bool:
    try:
        int(s)
    except ValueError:
        return False
    return True


def build_dataset(source, seed: int, test_fraction: float = 0.25, gamma: float | None = None) -> Dataset:
    if isinstance(source, SyntheticSpec):
        x, y, cols = synth_dataset(source, seed)
        xtr, ytr, xte, yte = split(x, y, source.test_fraction, seed + 1)
        return Dataset(xtr, ytr, xte, yte, source.n_classes, cols)
    x, y = load_csv(source)
    xtr, ytr, xte, yte = split(x, y, test_fraction, seed + 1)
    cols = np.flatnonzero(np.max(np.abs(x), axis=0) > gamma) if gamma else np.zeros(0, dtype=np.int64)
    return Dataset(xtr, ytr, xte, yte, int(y.max()) + 1, cols)
