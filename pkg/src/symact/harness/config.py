"""Benchmark configuration files.

INI-style text with one ``[dataset:<name>]`` section per dataset, one
``[model:<name>]`` section per model-grid entry, and an optional ``[run]``
section for shared settings.  Every key is validated against a fixed
vocabulary and unknown keys or sections fail fast, so a typo cannot silently
change an experiment.

Example::

    [run]
    seeds = 42, 43, 44
    precision = f32

    [dataset:spambase]
    path = data/spambase.csv
    label = label
    formula = out/spambase.formula

    [model:heavy-relu]
    arch = heavy
    activation = relu

    [model:light-specialist]
    arch = light
    activation = specialist

    [model:light-transfer]
    arch = light
    activation = transfer
    formula = out/higgs.formula

``activation`` is one of relu, gelu, silu, specialist, or transfer.
Specialist models use the target dataset's own ``formula`` file; transfer
models carry their source formula file in the model section.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

_RUN_KEYS = {"seeds", "epochs", "batch_size", "learning_rate", "precision",
             "discovery_fraction", "discovery_seed"}
_DATASET_KEYS = {"path", "label", "name", "formula"}
_MODEL_KEYS = {"arch", "activation", "formula"}
_BUILTIN = {"relu", "gelu", "silu"}
_ACTIVATIONS = _BUILTIN | {"specialist", "transfer"}


class ConfigError(ValueError):
    """Malformed benchmark configuration."""


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    path: str
    label: str
    formula: str | None = None


@dataclass(frozen=True)
class ModelSpec:
    name: str
    arch: str
    activation: str
    formula: str | None = None


@dataclass(frozen=True)
class RunSettings:
    seeds: tuple = (42, 43, 44)
    epochs: int = 15
    batch_size: int = 1024
    learning_rate: float = 0.001
    precision: str = "f32"
    discovery_fraction: float = 0.1
    discovery_seed: int = 42


@dataclass(frozen=True)
class BenchmarkConfig:
    datasets: list = field(default_factory=list)
    models: list = field(default_factory=list)
    run: RunSettings = field(default_factory=RunSettings)


def _check_keys(section: str, present, allowed: set, required: set) -> None:
    unknown = set(present) - allowed
    if unknown:
        raise ConfigError(f"[{section}]: unknown key(s) "
                          f"{', '.join(sorted(unknown))}; "
                          f"allowed: {', '.join(sorted(allowed))}")
    missing = required - set(present)
    if missing:
        raise ConfigError(f"[{section}]: missing required key(s) "
                          f"{', '.join(sorted(missing))}")


def _parse_seeds(text: str, section: str) -> tuple:
    try:
        seeds = tuple(int(part) for part in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"[{section}]: seeds must be integers, "
                          f"got {text!r}") from None
    if not seeds:
        raise ConfigError(f"[{section}]: seeds list is empty")
    return seeds


def load_config(path) -> BenchmarkConfig:
    """Parse and validate a benchmark configuration file."""
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    read = parser.read(path, encoding="utf-8")
    if not read:
        raise ConfigError(f"{path}: cannot read configuration file")

    run = RunSettings()
    datasets = []
    models = []
    for section in parser.sections():
        items = dict(parser.items(section))
        if section == "run":
            _check_keys(section, items, _RUN_KEYS, set())
            kwargs = {}
            if "seeds" in items:
                kwargs["seeds"] = _parse_seeds(items["seeds"], section)
            for key, cast in (("epochs", int), ("batch_size", int),
                              ("learning_rate", float),
                              ("discovery_fraction", float),
                              ("discovery_seed", int)):
                if key in items:
                    try:
                        kwargs[key] = cast(items[key])
                    except ValueError:
                        raise ConfigError(
                            f"[run]: {key} must be {cast.__name__}, "
                            f"got {items[key]!r}") from None
            if "precision" in items:
                if items["precision"] not in ("f32", "f64"):
                    raise ConfigError(f"[run]: precision must be f32 or "
                                      f"f64, got {items['precision']!r}")
                kwargs["precision"] = items["precision"]
            run = RunSettings(**kwargs)
        elif section.startswith("dataset:"):
            name = section.split(":", 1)[1].strip()
            if not name:
                raise ConfigError(f"[{section}]: empty dataset name")
            _check_keys(section, items, _DATASET_KEYS, {"path", "label"})
            datasets.append(DatasetSpec(
                name=items.get("name", name), path=items["path"],
                label=items["label"], formula=items.get("formula")))
        elif section.startswith("model:"):
            name = section.split(":", 1)[1].strip()
            if not name:
                raise ConfigError(f"[{section}]: empty model name")
            _check_keys(section, items, _MODEL_KEYS, {"arch", "activation"})
            arch = items["arch"]
            if arch not in ("heavy", "light"):
                raise ConfigError(f"[{section}]: arch must be heavy or "
                                  f"light, got {arch!r}")
            activation = items["activation"]
            if activation not in _ACTIVATIONS:
                raise ConfigError(
                    f"[{section}]: activation must be one of "
                    f"{', '.join(sorted(_ACTIVATIONS))}, got {activation!r}")
            formula = items.get("formula")
            if activation == "transfer" and formula is None:
                raise ConfigError(f"[{section}]: transfer models need a "
                                  "formula key naming the source file")
            if activation in _BUILTIN and formula is not None:
                raise ConfigError(f"[{section}]: builtin activation "
                                  f"{activation} does not take a formula")
            models.append(ModelSpec(name=name, arch=arch,
                                    activation=activation, formula=formula))
        else:
            raise ConfigError(
                f"[{section}]: unknown section; use [run], "
                "[dataset:<name>], or [model:<name>]")

    if not datasets:
        raise ConfigError(f"{path}: no [dataset:...] sections")
    if not models:
        raise ConfigError(f"{path}: no [model:...] sections")
    seen = set()
    for d in datasets:
        if d.name in seen:
            raise ConfigError(f"duplicate dataset name {d.name!r}")
        seen.add(d.name)
    for m in models:
        if m.activation == "specialist":
            missing = [d.name for d in datasets if d.formula is None]
            if missing:
                raise ConfigError(
                    f"[model:{m.name}]: specialist activation requires a "
                    f"formula key on every dataset; missing for "
                    f"{', '.join(missing)}")
    return BenchmarkConfig(datasets=datasets, models=models, run=run)
