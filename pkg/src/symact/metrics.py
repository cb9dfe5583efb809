"""Evaluation metrics: accuracy, rank-based AUC, parameter efficiency, and
cross-seed aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata


@dataclass(frozen=True)
class EvalResult:
    """Single-seed test metrics for one trained model."""

    accuracy: float
    auc: float
    params: int
    efficiency: float
    seed: int


@dataclass(frozen=True)
class Aggregate:
    """Cross-seed mean and sample (n-1) standard deviation per metric."""

    n_seeds: int
    params: int
    accuracy_mean: float
    accuracy_std: float
    auc_mean: float
    auc_std: float
    efficiency_mean: float
    efficiency_std: float


def accuracy(probs, labels, threshold: float = 0.5) -> float:
    """Fraction of rows where ``prob >= threshold`` matches the label."""
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels)
    if probs.size == 0:
        raise ValueError("accuracy of empty input is undefined")
    if probs.shape != labels.shape:
        raise ValueError(f"length mismatch: {probs.shape} vs {labels.shape}")
    predicted = (probs >= threshold).astype(labels.dtype)
    return float(np.mean(predicted == labels))


def auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative, with
    half credit for ties (computed from average ranks in O(n log n))."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError(f"length mismatch: {scores.shape} vs {labels.shape}")
    positive = labels == 1
    n_pos = int(positive.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC requires both classes to be present")
    ranks = rankdata(scores)
    pos_rank_sum = float(ranks[positive].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def efficiency(auc_value: float, params: int) -> float:
    """AUC divided by log10 of the trainable parameter count."""
    if params < 2:
        raise ValueError(f"efficiency needs params >= 2, got {params}")
    return auc_value / math.log10(params)


def aggregate(results: list[EvalResult]) -> Aggregate:
    """Mean and sample std over seeds; efficiency is the mean of the per-seed
    efficiencies.  All results must come from the same model size."""
    if not results:
        raise ValueError("cannot aggregate zero results")
    params = {r.params for r in results}
    if len(params) > 1:
        raise ValueError(f"mixed parameter counts {sorted(params)}: "
                         "results describe different models")

    def stats(values):
        values = np.asarray(values, dtype=float)
        mean = float(values.mean())
        std = 0.0 if values.size == 1 else float(values.std(ddof=1))
        return mean, std

    acc = stats([r.accuracy for r in results])
    auc_ = stats([r.auc for r in results])
    eff = stats([r.efficiency for r in results])
    return Aggregate(
        n_seeds=len(results),
        params=results[0].params,
        accuracy_mean=acc[0], accuracy_std=acc[1],
        auc_mean=auc_[0], auc_std=auc_[1],
        efficiency_mean=eff[0], efficiency_std=eff[1],
    )


def improvement(light: Aggregate, heavy: Aggregate) -> tuple[float, float]:
    """Relative efficiency gain (percent) of the light model over the heavy
    one, plus the parameter reduction factor."""
    if heavy.efficiency_mean == 0.0:
        raise ValueError("heavy efficiency is zero; gain undefined")
    gain = (light.efficiency_mean - heavy.efficiency_mean) / heavy.efficiency_mean * 100.0
    reduction = heavy.params / light.params
    return gain, reduction
