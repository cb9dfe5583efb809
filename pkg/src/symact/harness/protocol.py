"""The benchmark protocol, shared by the CLI commands.

Every run follows the same sequence.  A discovery subset is carved out with
a fixed seed and removed for all models, so baselines and symbolic models
see the exact same remainder.  The remainder is split 80/20 per run seed,
the scaler is fit on the training split only, and the network trains from
scratch.  Test rows are hashed into each result so that protocol fidelity
(identical test rows across model specs at the same seed) can be audited
after the fact.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import asdict, dataclass

import numpy as np

from ..data import Dataset, Scaler, stratified_split_indices
from ..expressions import generalize_with_flag, print_formula
from ..gp import GpConfig, evolve
from ..metrics import EvalResult, accuracy, aggregate, auc, efficiency
from ..network import (ModelConfig, TrainConfig, build_network, predict_proba,
                       train, weight_stream)
from .records import FormulaRecord, RunRecord, load_formula

_PRETTY_BUILTIN = {"relu": "ReLU", "gelu": "GELU", "silu": "SiLU"}


def resolved_defaults() -> dict:
    """Every choice the protocol fixes that a run's inputs do not pin down.

    Stored verbatim in each run record so results remain interpretable even
    if later versions change a default.
    """
    gp = GpConfig()
    return {
        "gp_population_size": gp.population_size,
        "gp_generations": gp.generations,
        "gp_parsimony_coefficient": gp.parsimony_coefficient,
        "gp_tournament_size": gp.tournament_size,
        "gp_p_crossover": gp.p_crossover,
        "gp_p_subtree_mutation": gp.p_subtree_mutation,
        "gp_p_point_mutation": gp.p_point_mutation,
        "gp_p_hoist_mutation": gp.p_hoist_mutation,
        "gp_fitness": "mean logistic log-loss, probabilities clamped at 1e-07",
        "gp_elitism": 1,
        "scaler_std": "population (ddof=0), floor 1e-08",
        "scaler_fit": "training split only; discovery subset uses its own",
        "accuracy_threshold": 0.5,
        "aggregate_std": "sample (ddof=1)",
        "aggregate_efficiency": "mean of per-seed efficiencies",
        "auc_ties": "average ranks (half credit)",
        "bn_momentum": 0.1,
        "bn_eps": 1e-05,
        "bn_variance": "biased (denominator n), also stored in running stats",
        "weight_init": "uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), biases too",
        "adam_beta1": 0.9,
        "adam_beta2": 0.999,
        "adam_eps": 1e-08,
        "last_partial_batch": "trained",
        "train_split": "stratified 80/20 by run seed",
        "discovery_exclusion": "removed before the 80/20 split, so absent "
                               "from both train and test",
        "gelu_form": "tanh approximation",
    }


@dataclass(frozen=True)
class ActivationSource:
    """Where a model's activation comes from, with display metadata."""

    kind: str                      # builtin | specialist | transfer
    activation: object             # builtin name or generalized Formula
    raw_text: str | None = None
    generalized_text: str | None = None
    formula_path: str | None = None
    source_dataset: str | None = None

    @property
    def label(self) -> str:
        if self.kind == "builtin":
            return _PRETTY_BUILTIN[self.activation]
        origin = self.source_dataset or "?"
        return f"{self.kind.capitalize()} ({origin})"


def builtin_source(name: str) -> ActivationSource:
    if name not in _PRETTY_BUILTIN:
        raise ValueError(f"unknown builtin activation {name!r}; choose from "
                         f"{', '.join(sorted(_PRETTY_BUILTIN))}")
    return ActivationSource(kind="builtin", activation=name)


def formula_source(path, target_dataset: str | None = None,
                   force_transfer: bool = False) -> ActivationSource:
    """Activation from a formula file.

    The run counts as a specialist when the formula's recorded source
    dataset matches the target dataset, and as a transfer otherwise (or when
    ``force_transfer`` says so).
    """
    loaded = load_formula(path)
    source_name = (loaded.record.source_dataset if loaded.record is not None
                   else None)
    if force_transfer:
        kind = "transfer"
    elif source_name is None or source_name == target_dataset:
        kind = "specialist"
    else:
        kind = "transfer"
    return ActivationSource(
        kind=kind, activation=loaded.activation,
        raw_text=print_formula(loaded.raw),
        generalized_text=print_formula(loaded.activation),
        formula_path=str(path), source_dataset=source_name)


def discover(dataset: Dataset, fraction: float = 0.1, seed: int = 42,
             gp_overrides: dict | None = None,
             observer=None) -> FormulaRecord:
    """Evolve a formula on a stratified subset of the dataset.

    The subset is standardized with a scaler fit on the subset itself;
    discovery is an isolated phase and must not touch later splits.
    """
    subset_idx, _ = stratified_split_indices(dataset.y, fraction, seed)
    X = Scaler().fit_transform(dataset.X[subset_idx])
    y = dataset.y[subset_idx]
    cfg = GpConfig(seed=seed, **(gp_overrides or {}))
    best, history = evolve(cfg, X, y, observer=observer)
    generalized, fired = generalize_with_flag(best)
    return FormulaRecord(
        raw=print_formula(best),
        generalized=print_formula(generalized),
        source_dataset=dataset.name,
        discovery_seed=seed,
        gp_config=asdict(cfg),
        history=[asdict(h) for h in history],
        pair_collapse_applied=fired)


def _test_rows_digest(test_idx: np.ndarray) -> str:
    rows = np.sort(np.asarray(test_idx, dtype=np.int64))
    return hashlib.sha256(np.ascontiguousarray(rows).tobytes()).hexdigest()


def run_experiment(dataset: Dataset, arch: str, source: ActivationSource,
                   seeds=(42, 43, 44), *, epochs: int = 15,
                   batch_size: int = 1024, learning_rate: float = 0.001,
                   precision: str = "f32", discovery_fraction: float = 0.1,
                   discovery_seed: int = 42, train_fraction: float = 0.8,
                   dataset_meta: dict | None = None,
                   observer=None) -> RunRecord:
    """Train and evaluate one (dataset, model) cell over the given seeds."""
    started = time.time()
    _, rest_idx = stratified_split_indices(dataset.y, discovery_fraction,
                                           discovery_seed)
    results = []
    eval_results = []
    params = None
    for seed in seeds:
        train_rel, test_rel = stratified_split_indices(
            dataset.y[rest_idx], train_fraction, seed)
        train_idx = rest_idx[train_rel]
        test_idx = rest_idx[test_rel]
        scaler = Scaler().fit(dataset.X[train_idx])
        net = build_network(
            ModelConfig(arch, dataset.n_features, source.activation),
            weight_stream(seed), dtype=precision)
        cfg = TrainConfig(learning_rate=learning_rate,
                          batch_size=batch_size, epochs=epochs, seed=seed)
        _, history = train(net, scaler.transform(dataset.X[train_idx]),
                           dataset.y[train_idx], cfg)
        probs = predict_proba(net, scaler.transform(dataset.X[test_idx]))
        labels = dataset.y[test_idx]
        acc = accuracy(probs, labels)
        auc_value = auc(probs, labels)
        eff = efficiency(auc_value, net.param_count)
        params = net.param_count
        eval_results.append(EvalResult(acc, auc_value, params, eff, seed))
        results.append({
            "seed": seed, "accuracy": acc, "auc": auc_value,
            "params": params, "efficiency": eff,
            "final_train_loss": history[-1],
            "test_rows_sha256": _test_rows_digest(test_idx)})
        if observer is not None:
            observer(eval_results[-1])
    agg = aggregate(eval_results)
    return RunRecord(
        dataset={"name": dataset.name, "n_rows": dataset.n_rows,
                 "n_features": dataset.n_features, **(dataset_meta or {})},
        model={"arch": arch, "activation_kind": source.kind,
               "activation": (source.activation
                              if source.kind == "builtin" else "symbolic"),
               "label": source.label,
               "formula_raw": source.raw_text,
               "formula_generalized": source.generalized_text,
               "formula_path": source.formula_path,
               "source_dataset": source.source_dataset,
               "params": params},
        train_config={"learning_rate": learning_rate,
                      "batch_size": batch_size, "epochs": epochs,
                      "precision": precision},
        protocol={"discovery_fraction": discovery_fraction,
                  "discovery_seed": discovery_seed,
                  "train_fraction": train_fraction},
        seeds=list(seeds),
        results=results,
        aggregate=asdict(agg),
        wall_seconds=time.time() - started,
        resolved_defaults=resolved_defaults())


def run_benchmark(config, progress=None) -> list[RunRecord]:
    """Run the full dataset x model matrix from a benchmark config.

    A failing cell is recorded with its error message instead of aborting
    the rest of the matrix.
    """
    from ..data import load_csv

    records = []
    for dspec in config.datasets:
        try:
            dataset = load_csv(dspec.path, dspec.label, name=dspec.name)
        except Exception as exc:
            dataset = None
            load_error = f"{type(exc).__name__}: {exc}"
        for mspec in config.models:
            if progress is not None:
                progress(f"{dspec.name} / {mspec.name}")
            try:
                if dataset is None:
                    raise ValueError(f"dataset failed to load: {load_error}")
                if mspec.activation in _PRETTY_BUILTIN:
                    source = builtin_source(mspec.activation)
                elif mspec.activation == "specialist":
                    source = formula_source(dspec.formula, dspec.name)
                else:
                    source = formula_source(mspec.formula, dspec.name,
                                            force_transfer=True)
                record = run_experiment(
                    dataset, mspec.arch, source, config.run.seeds,
                    epochs=config.run.epochs,
                    batch_size=config.run.batch_size,
                    learning_rate=config.run.learning_rate,
                    precision=config.run.precision,
                    discovery_fraction=config.run.discovery_fraction,
                    discovery_seed=config.run.discovery_seed,
                    dataset_meta={"path": dspec.path, "label": dspec.label})
                record.model["name"] = mspec.name
                records.append(record)
            except Exception as exc:
                records.append(RunRecord(
                    dataset={"name": dspec.name, "path": dspec.path,
                             "label": dspec.label},
                    model={"name": mspec.name, "arch": mspec.arch,
                           "activation_kind": mspec.activation,
                           "activation": mspec.activation,
                           "label": mspec.activation,
                           "params": None},
                    train_config={}, protocol={},
                    seeds=list(config.run.seeds), results=[], aggregate={},
                    wall_seconds=0.0,
                    resolved_defaults=resolved_defaults(),
                    error=f"{type(exc).__name__}: {exc}"))
    return records
