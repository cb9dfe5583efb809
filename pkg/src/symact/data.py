"""Dataset loading, stratified splitting, feature scaling, and the synthetic
generator used to exercise the evolutionary search."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted


@dataclass
class Dataset:
    """Row-major feature matrix with binary labels."""

    X: np.ndarray
    y: np.ndarray
    feature_names: list[str] = field(default_factory=list)
    name: str = "dataset"

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def take(self, indices: np.ndarray) -> "Dataset":
        return Dataset(self.X[indices], self.y[indices],
                       list(self.feature_names), self.name)


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def load_csv(path, label_column, name: str | None = None) -> Dataset:
    """Load a numeric CSV with a binary label column.

    The first row is treated as a header when it contains any non-numeric
    cell; headerless files get index-named features ``f0``, ``f1``, ...
    ``label_column`` is a header name or a 0-based column index.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise ValueError(f"{path}: file is empty")

    has_header = any(not _is_number(cell) for cell in rows[0])
    if has_header:
        columns = [c.strip() for c in rows[0]]
        data_rows = rows[1:]
        first_line = 2
    else:
        columns = [f"f{i}" for i in range(len(rows[0]))]
        data_rows = rows
        first_line = 1
    if not data_rows:
        raise ValueError(f"{path}: no data rows")

    if isinstance(label_column, str) and label_column in columns:
        label_idx = columns.index(label_column)
    else:
        try:
            label_idx = int(label_column)
        except (TypeError, ValueError):
            raise ValueError(
                f"{path}: label column {label_column!r} not in header "
                f"{columns}") from None
        if not 0 <= label_idx < len(columns):
            raise ValueError(f"{path}: label column index {label_idx} out of "
                             f"range for {len(columns)} columns")

    n_cols = len(columns)
    values = np.empty((len(data_rows), n_cols))
    for r, row in enumerate(data_rows):
        if len(row) != n_cols:
            raise ValueError(f"{path}: line {first_line + r} has {len(row)} "
                             f"cells, expected {n_cols}")
        for c, cell in enumerate(row):
            try:
                values[r, c] = float(cell)
            except ValueError:
                raise ValueError(
                    f"{path}: non-numeric cell {cell!r} at line "
                    f"{first_line + r}, column {c + 1}") from None

    y_raw = values[:, label_idx]
    bad = y_raw[(y_raw != 0.0) & (y_raw != 1.0)]
    if bad.size:
        raise ValueError(f"{path}: label column must be binary 0/1, found "
                         f"value {bad[0]!r}")
    feature_idx = [i for i in range(n_cols) if i != label_idx]
    X = values[:, feature_idx]
    if not np.isfinite(X).all():
        r, c = np.argwhere(~np.isfinite(X))[0]
        raise ValueError(f"{path}: non-finite value at line {first_line + r}, "
                         f"feature {feature_idx[c] + 1}")
    return Dataset(X=X, y=y_raw.astype(np.int64),
                   feature_names=[columns[i] for i in feature_idx],
                   name=name or path.stem)


def save_csv(dataset: Dataset, path) -> None:
    """Write a dataset back out with a header and a ``label`` column."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(dataset.feature_names) + ["label"])
        for row, label in zip(dataset.X, dataset.y):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


def stratified_split_indices(y, fraction: float, seed: int
                             ) -> tuple[np.ndarray, np.ndarray]:
    """Partition row indices so each class contributes round(fraction * n)
    rows to the first part.  Deterministic for a fixed seed."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    y = np.asarray(y)
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("stratified split requires both classes present")
    rng = np.random.default_rng(seed)
    picked = []
    for cls in classes:
        idx = np.flatnonzero(y == cls)
        k = int(round(fraction * idx.size))
        if k == 0:
            raise ValueError(
                f"fraction {fraction} selects zero rows of class {cls}")
        picked.append(rng.permutation(idx)[:k])
    subset = np.sort(np.concatenate(picked))
    mask = np.ones(y.size, dtype=bool)
    mask[subset] = False
    return subset, np.flatnonzero(mask)


def stratified_subset(dataset: Dataset, fraction: float, seed: int
                      ) -> tuple[Dataset, Dataset]:
    """Split off a class-stratified fraction; returns (subset, remainder)."""
    subset_idx, rest_idx = stratified_split_indices(dataset.y, fraction, seed)
    return dataset.take(subset_idx), dataset.take(rest_idx)


def train_test_split(dataset: Dataset, train_fraction: float = 0.8,
                     seed: int = 0) -> tuple[Dataset, Dataset]:
    """Stratified train/test partition."""
    train_idx, test_idx = stratified_split_indices(dataset.y, train_fraction,
                                                   seed)
    return dataset.take(train_idx), dataset.take(test_idx)


class Scaler(BaseEstimator, TransformerMixin):
    """Per-feature standardization to zero mean and unit variance.

    Uses the population (biased) standard deviation with a floor so constant
    columns map to zero instead of dividing by zero.
    """

    def __init__(self, std_floor: float = 1e-8):
        self.std_floor = std_floor

    def fit(self, X, y=None):
        X = check_array(X, dtype="numeric")
        self.mean_ = X.mean(axis=0)
        self.scale_ = np.maximum(X.std(axis=0), self.std_floor)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X, dtype="numeric")
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, "
                             f"got {X.shape[1]}")
        return (X - self.mean_) / self.scale_


def fit_scaler(train: Dataset) -> Scaler:
    """Fit a standardizer on training rows only."""
    return Scaler().fit(train.X)


def synth_planted(n_rows: int, n_features: int = 5, noise_rate: float = 0.0,
                  seed: int = 0) -> Dataset:
    """Synthetic binary task whose labels come from a known closed form.

    Features are uniform on [-2, 2]; the label is 1 when
    ``sin(x0) + x1 * x2 > 0``, with each label independently flipped with
    probability ``noise_rate``.  Serves as a recovery oracle for the search.
    """
    if n_features < 3:
        raise ValueError(f"planted rule needs at least 3 features, "
                         f"got {n_features}")
    if not 0.0 <= noise_rate < 0.5:
        raise ValueError(f"noise_rate must be in [0, 0.5), got {noise_rate}")
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2.0, 2.0, size=(n_rows, n_features))
    y = (np.sin(X[:, 0]) + X[:, 1] * X[:, 2] > 0).astype(np.int64)
    if noise_rate > 0.0:
        flips = rng.random(n_rows) < noise_rate
        y = np.where(flips, 1 - y, y)
    return Dataset(X=X, y=y,
                   feature_names=[f"f{i}" for i in range(n_features)],
                   name=f"planted-{seed}")
