"""Render run records into benchmark tables and activation curve files.

The benchmark matrix groups rows by dataset and sorts each group by mean
efficiency ascending, so the most parameter-efficient model lands on the
last row, which markdown output bolds.  The improvement summary pairs each
dataset's Heavy ReLU baseline with its best symbolic Light model.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict

import numpy as np

from ..metrics import improvement
from .records import RunRecord

FORMATS = ("md", "csv", "json")


def _display_label(model: dict) -> str:
    return f"{model['arch'].capitalize()} {model.get('label', '?')}"


def _group_by_dataset(records) -> list[tuple[str, list[RunRecord]]]:
    order = []
    groups = {}
    for record in records:
        name = record.dataset.get("name", "?")
        if name not in groups:
            order.append(name)
            groups[name] = []
        groups[name].append(record)
    return [(name, groups[name]) for name in order]


def _sorted_rows(group: list[RunRecord]) -> list[RunRecord]:
    usable = [r for r in group if r.error is None]
    return sorted(usable, key=lambda r: r.aggregate["efficiency_mean"])


def render_matrix(records, fmt: str = "md") -> str:
    if fmt == "md":
        return _matrix_markdown(records)
    if fmt == "csv":
        return _matrix_csv(records)
    if fmt == "json":
        return json.dumps([asdict(r) for r in records], indent=2) + "\n"
    raise ValueError(f"unknown format {fmt!r}; choose from {FORMATS}")


def _matrix_markdown(records) -> str:
    lines = ["# Benchmark results", ""]
    for dataset, group in _group_by_dataset(records):
        lines.append(f"## {dataset}")
        lines.append("")
        lines.append("| Model | Accuracy | AUC | Params | Efficiency |")
        lines.append("|---|---|---|---|---|")
        rows = _sorted_rows(group)
        for i, record in enumerate(rows):
            agg = record.aggregate
            label = _display_label(record.model)
            eff = f"{agg['efficiency_mean']:.3f}"
            if i == len(rows) - 1 and len(rows) > 1:
                label = f"**{label}**"
                eff = f"**{eff}**"
            lines.append(
                "| {} | {:.3f} ± {:.3f} | {:.3f} ± {:.3f} | {:,} | {} |"
                .format(label, agg["accuracy_mean"], agg["accuracy_std"],
                        agg["auc_mean"], agg["auc_std"],
                        record.model["params"], eff))
        for record in group:
            if record.error is not None:
                lines.append(f"| {_display_label(record.model)} | "
                             f"failed: {record.error} | | | |")
        lines.append("")
    return "\n".join(lines)


def _matrix_csv(records) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["dataset", "model", "arch", "activation",
                     "accuracy_mean", "accuracy_std", "auc_mean", "auc_std",
                     "params", "efficiency_mean", "efficiency_std", "error"])
    for dataset, group in _group_by_dataset(records):
        for record in _sorted_rows(group):
            agg = record.aggregate
            writer.writerow([
                dataset, _display_label(record.model),
                record.model["arch"], record.model["activation"],
                f"{agg['accuracy_mean']:.6f}", f"{agg['accuracy_std']:.6f}",
                f"{agg['auc_mean']:.6f}", f"{agg['auc_std']:.6f}",
                record.model["params"],
                f"{agg['efficiency_mean']:.6f}",
                f"{agg['efficiency_std']:.6f}", ""])
        for record in group:
            if record.error is not None:
                writer.writerow([dataset, _display_label(record.model),
                                 record.model["arch"],
                                 record.model.get("activation", "?"),
                                 "", "", "", "", "", "", "", record.error])
    return buffer.getvalue()


def improvement_rows(records) -> list[dict]:
    """Heavy-baseline versus best symbolic Light model, per dataset."""
    rows = []
    for dataset, group in _group_by_dataset(records):
        heavy = [r for r in group if r.error is None
                 and r.model["arch"] == "heavy"
                 and r.model.get("activation") == "relu"]
        hybrids = [r for r in group if r.error is None
                   and r.model["arch"] == "light"
                   and r.model.get("activation_kind") in ("specialist",
                                                          "transfer")]
        if not heavy or not hybrids:
            continue
        baseline = heavy[0]
        best = max(hybrids, key=lambda r: r.aggregate["efficiency_mean"])
        gain, reduction = improvement(best.aggregate_result(),
                                      baseline.aggregate_result())
        rows.append({
            "dataset": dataset,
            "heavy_model": _display_label(baseline.model),
            "hybrid_model": _display_label(best.model),
            "heavy_efficiency": baseline.aggregate["efficiency_mean"],
            "hybrid_efficiency": best.aggregate["efficiency_mean"],
            "heavy_params": baseline.model["params"],
            "hybrid_params": best.model["params"],
            "efficiency_gain_percent": gain,
            "param_reduction": reduction,
        })
    return rows


def render_improvements(records, fmt: str = "md") -> str:
    rows = improvement_rows(records)
    if fmt == "json":
        return json.dumps(rows, indent=2) + "\n"
    if fmt == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["dataset", "heavy_model", "hybrid_model",
                         "heavy_efficiency", "hybrid_efficiency",
                         "heavy_params", "hybrid_params",
                         "efficiency_gain_percent", "param_reduction"])
        for row in rows:
            writer.writerow([
                row["dataset"], row["heavy_model"], row["hybrid_model"],
                f"{row['heavy_efficiency']:.6f}",
                f"{row['hybrid_efficiency']:.6f}",
                row["heavy_params"], row["hybrid_params"],
                f"{row['efficiency_gain_percent']:.6f}",
                f"{row['param_reduction']:.6f}"])
        return buffer.getvalue()
    if fmt == "md":
        lines = ["# Efficiency improvements", "",
                 "| Dataset | Hybrid model | Efficiency (hybrid vs heavy) "
                 "| Gain | Param reduction |",
                 "|---|---|---|---|---|"]
        for row in rows:
            lines.append(
                "| {} | {} | {:.3f} vs {:.3f} | {:+.1f}% | {:.1f}x |"
                .format(row["dataset"], row["hybrid_model"],
                        row["hybrid_efficiency"], row["heavy_efficiency"],
                        row["efficiency_gain_percent"],
                        row["param_reduction"]))
        lines.append("")
        return "\n".join(lines)
    raise ValueError(f"unknown format {fmt!r}; choose from {FORMATS}")


def curve_grid(lo: float = -5.0, hi: float = 5.0,
               step: float = 0.05) -> np.ndarray:
    """Evenly spaced grid built from integer multiples of the step, so the
    endpoints and zero land exactly on grid points."""
    if step <= 0 or hi <= lo:
        raise ValueError("need step > 0 and hi > lo")
    k0 = round(lo / step)
    k1 = round(hi / step)
    return np.arange(k0, k1 + 1) * step


def render_curves_csv(named_activations, lo: float = -5.0, hi: float = 5.0,
                      step: float = 0.05) -> str:
    """Value and derivative columns for each activation on a shared grid."""
    names = [name for name, _ in named_activations]
    if len(set(names)) != len(names):
        raise ValueError("duplicate activation names in curve export")
    xs = curve_grid(lo, hi, step)
    columns = [xs]
    header = ["x"]
    for name, activation in named_activations:
        columns.append(np.asarray(activation.value(xs), dtype=np.float64))
        columns.append(np.asarray(activation.grad(xs), dtype=np.float64))
        header.extend([name, f"{name}_derivative"])
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for i in range(xs.size):
        writer.writerow([f"{float(col[i]):.10g}" for col in columns])
    return buffer.getvalue()
