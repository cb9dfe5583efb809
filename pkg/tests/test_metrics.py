"""Classification metrics and cross-seed aggregation."""

import math

import numpy as np
import pytest

import oracles
from symact.metrics import (Aggregate, EvalResult, accuracy, aggregate, auc,
                            efficiency, improvement)


def test_accuracy_counts_threshold_matches():
    probs = [0.9, 0.2, 0.7, 0.4]
    labels = [1, 0, 0, 1]
    assert accuracy(probs, labels) == 0.5


def test_accuracy_threshold_tie_predicts_positive():
    assert accuracy([0.5], [1]) == 1.0
    assert accuracy([0.5], [0]) == 0.0


def test_accuracy_custom_threshold():
    assert accuracy([0.3, 0.1], [1, 0], threshold=0.25) == 1.0


def test_accuracy_validates_input():
    with pytest.raises(ValueError):
        accuracy([], [])
    with pytest.raises(ValueError):
        accuracy([0.5, 0.5], [1])


def test_auc_perfect_and_inverted_ranking():
    labels = [0, 0, 1, 1]
    assert auc([0.1, 0.2, 0.8, 0.9], labels) == 1.0
    assert auc([0.9, 0.8, 0.2, 0.1], labels) == 0.0


def test_auc_half_credit_for_ties():
    scores = [0.5, 0.5, 0.5, 0.5]
    labels = [0, 1, 0, 1]
    assert auc(scores, labels) == 0.5

    scores = [0.2, 0.5, 0.5, 0.9]
    labels = [0, 0, 1, 1]
    # Pairs: (0.5 vs 0.2)=1, (0.5 vs 0.5)=0.5, (0.9 vs 0.2)=1, (0.9 vs 0.5)=1
    assert auc(scores, labels) == pytest.approx(3.5 / 4.0)


def test_auc_matches_pair_counting_reference():
    rng = np.random.default_rng(21)
    for _ in range(25):
        n = int(rng.integers(2, 60))
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        scores = np.round(rng.normal(size=n), 1)  # rounding forces ties
        expected = oracles.auc_pairs(scores, labels)
        assert auc(scores, labels) == pytest.approx(expected, abs=1e-12)


def test_auc_invariant_under_monotone_transforms():
    rng = np.random.default_rng(3)
    scores = rng.normal(size=80)
    labels = rng.integers(0, 2, size=80)
    labels[0], labels[1] = 0, 1
    base = auc(scores, labels)
    assert auc(np.exp(scores), labels) == pytest.approx(base, abs=1e-12)
    assert auc(3.0 * scores + 7.0, labels) == pytest.approx(base, abs=1e-12)


def test_auc_complement_without_ties():
    rng = np.random.default_rng(4)
    scores = rng.permutation(100).astype(float)
    labels = rng.integers(0, 2, size=100)
    labels[0], labels[1] = 0, 1
    assert auc(scores, labels) + auc(-scores, labels) == pytest.approx(1.0)


def test_auc_requires_both_classes():
    with pytest.raises(ValueError):
        auc([0.1, 0.9], [1, 1])


def test_efficiency_definition():
    assert efficiency(0.791, 26601) == pytest.approx(
        0.791 / math.log10(26601), abs=1e-15)
    assert efficiency(0.904, 5825) == pytest.approx(0.240, abs=1e-3)


def test_efficiency_monotonicity():
    assert efficiency(0.9, 1000) > efficiency(0.9, 2000)
    assert efficiency(0.9, 1000) > efficiency(0.8, 1000)


def test_efficiency_rejects_degenerate_param_counts():
    with pytest.raises(ValueError):
        efficiency(0.9, 1)


def _result(acc, auc_value, params, seed):
    return EvalResult(accuracy=acc, auc=auc_value, params=params,
                      efficiency=efficiency(auc_value, params), seed=seed)


def test_aggregate_mean_and_sample_std():
    results = [_result(0.90, 0.95, 4161, 42),
               _result(0.92, 0.97, 4161, 43),
               _result(0.91, 0.93, 4161, 44)]
    agg = aggregate(results)
    assert agg.n_seeds == 3
    assert agg.params == 4161
    assert agg.accuracy_mean == pytest.approx(0.91, abs=1e-12)
    assert agg.accuracy_std == pytest.approx(
        oracles.sample_std([0.90, 0.92, 0.91]), abs=1e-12)
    assert agg.auc_mean == pytest.approx(0.95, abs=1e-12)
    assert agg.efficiency_mean == pytest.approx(
        oracles.mean([r.efficiency for r in results]), abs=1e-15)


def test_aggregate_efficiency_is_mean_of_per_seed_values():
    results = [_result(0.5, 0.5, 100, 1), _result(0.9, 0.9, 100, 2)]
    agg = aggregate(results)
    per_seed = [efficiency(0.5, 100), efficiency(0.9, 100)]
    assert agg.efficiency_mean == pytest.approx(oracles.mean(per_seed))
    assert agg.efficiency_std == pytest.approx(oracles.sample_std(per_seed))


def test_aggregate_single_seed_has_zero_std():
    agg = aggregate([_result(0.9, 0.95, 500, 42)])
    assert agg.accuracy_std == 0.0
    assert agg.auc_std == 0.0


def test_aggregate_rejects_mixed_model_sizes():
    with pytest.raises(ValueError):
        aggregate([_result(0.9, 0.9, 100, 1), _result(0.9, 0.9, 200, 2)])
    with pytest.raises(ValueError):
        aggregate([])


def _flat_aggregate(auc_value, params):
    eff = efficiency(auc_value, params)
    return Aggregate(n_seeds=3, params=params, accuracy_mean=0.0,
                     accuracy_std=0.0, auc_mean=auc_value, auc_std=0.0,
                     efficiency_mean=eff, efficiency_std=0.0)


def test_improvement_gain_and_reduction():
    light = _flat_aggregate(0.784, 4161)
    heavy = _flat_aggregate(0.791, 26601)
    gain, reduction = improvement(light, heavy)
    expected_gain = (light.efficiency_mean / heavy.efficiency_mean - 1) * 100
    assert gain == pytest.approx(expected_gain, abs=1e-12)
    assert reduction == pytest.approx(26601 / 4161, abs=1e-12)


def test_improvement_rejects_zero_baseline():
    light = _flat_aggregate(0.9, 100)
    heavy = Aggregate(n_seeds=1, params=1000, accuracy_mean=0, accuracy_std=0,
                      auc_mean=0.0, auc_std=0.0, efficiency_mean=0.0,
                      efficiency_std=0.0)
    with pytest.raises(ValueError):
        improvement(light, heavy)
