"""Persistent artifacts: formula files with sidecar metadata and run records.

A formula file's first line is the raw feature-indexed formula text, the one
source of truth; the single-variable activation is re-derived on every load
so the rewrite rules are applied reproducibly.  A sidecar JSON next to the
file (``<path>.meta.json``) captures discovery provenance.  Run records are
standalone JSON documents holding per-seed metrics, their aggregate, and a
snapshot of every default the protocol resolved, so results stay auditable.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

from .. import __version__
from ..expressions import Formula, generalize_with_flag, parse_formula
from ..metrics import Aggregate, EvalResult

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class FormulaRecord:
    """Provenance of a discovered formula."""

    raw: str
    generalized: str
    source_dataset: str
    discovery_seed: int
    gp_config: dict
    history: list
    pair_collapse_applied: bool
    schema_version: int = SCHEMA_VERSION


def formula_sidecar_path(path) -> Path:
    return Path(str(path) + ".meta.json")


def save_formula(record: FormulaRecord, path) -> None:
    """Write the formula file (line 1 = raw text) and its sidecar."""
    path = Path(path)
    path.write_text(record.raw + "\n", encoding="utf-8")
    formula_sidecar_path(path).write_text(
        json.dumps(asdict(record), indent=2) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class LoadedFormula:
    """A formula file pulled back in, with the activation re-derived."""

    raw: Formula
    activation: Formula
    pair_collapse_applied: bool
    record: FormulaRecord | None
    path: str


def load_formula(path) -> LoadedFormula:
    """Read a formula file; re-derive the activation from the raw text."""
    path = Path(path)
    text = path.read_text(encoding="utf-8").strip().splitlines()
    if not text or not text[0].strip():
        raise ValueError(f"{path}: formula file is empty")
    raw = parse_formula(text[0].strip())
    activation, fired = generalize_with_flag(raw)
    record = None
    sidecar = formula_sidecar_path(path)
    if sidecar.exists():
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
        record = FormulaRecord(**meta)
        if record.schema_version != SCHEMA_VERSION:
            raise ValueError(f"{sidecar}: unsupported schema version "
                             f"{record.schema_version}")
    return LoadedFormula(raw=raw, activation=activation,
                         pair_collapse_applied=fired, record=record,
                         path=str(path))


@dataclass(frozen=True)
class RunRecord:
    """One benchmark cell: a (dataset, model) pair over a list of seeds."""

    dataset: dict
    model: dict
    train_config: dict
    protocol: dict
    seeds: list
    results: list
    aggregate: dict
    wall_seconds: float
    resolved_defaults: dict
    library_version: str = __version__
    schema_version: int = SCHEMA_VERSION
    error: str | None = None

    def eval_results(self) -> list[EvalResult]:
        return [EvalResult(r["accuracy"], r["auc"], r["params"],
                           r["efficiency"], r["seed"]) for r in self.results]

    def aggregate_result(self) -> Aggregate:
        return Aggregate(**self.aggregate)


def save_record(record: RunRecord, path) -> None:
    Path(path).write_text(json.dumps(asdict(record), indent=2) + "\n",
                          encoding="utf-8")


def _record_from_dict(data: dict, origin: str) -> RunRecord:
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"{origin}: unsupported record schema version "
                         f"{version!r}")
    fields = {k: data[k] for k in (
        "dataset", "model", "train_config", "protocol", "seeds", "results",
        "aggregate", "wall_seconds", "resolved_defaults", "library_version",
        "schema_version")}
    fields["error"] = data.get("error")
    return RunRecord(**fields)


def load_records(*paths) -> list[RunRecord]:
    """Load run records from JSON files or directories of them.

    Accepts individual record files, report JSON files (lists of records),
    and directories, which are scanned for ``*.json``.  Formula sidecars are
    ignored.  Mixed schema versions are an error.
    """
    records = []
    for entry in paths:
        entry = Path(entry)
        if entry.is_dir():
            files = sorted(p for p in entry.glob("*.json")
                           if not p.name.endswith(".meta.json"))
        else:
            files = [entry]
        for file in files:
            data = json.loads(file.read_text(encoding="utf-8"))
            items = data if isinstance(data, list) else [data]
            for item in items:
                records.append(_record_from_dict(item, str(file)))
    return records
