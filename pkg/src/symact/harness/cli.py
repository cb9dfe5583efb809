"""Command-line entry point.

Subcommands:

* ``discover``   evolve an activation formula from a labelled CSV
* ``train``      train one model configuration over one or more seeds
* ``benchmark``  run a full dataset-by-model matrix from an INI config
* ``curves``     export value and derivative curves for activations
* ``gradcheck``  compare analytic gradients against finite differences
* ``report``     re-render saved run records as markdown, CSV, or JSON

Every subcommand returns 0 on success and 1 on failure; argparse itself
exits with 2 on bad usage.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .. import __version__
from ..data import Dataset, load_csv
from ..expressions import parse_formula
from ..gradcheck import DEFAULT_STEP, run_suite
from ..network import ARCH_HIDDEN, BUILTIN_ACTIVATIONS, make_activation
from .config import load_config
from .protocol import (builtin_source, discover, formula_source,
                       run_benchmark, run_experiment)
from .records import load_formula, load_records, save_formula, save_record
from .reports import (FORMATS, render_curves_csv, render_improvements,
                      render_matrix)


def _parse_seeds(text: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ValueError(f"bad seed list {text!r}; expected e.g. 42,43,44")
    if not seeds:
        raise ValueError("empty seed list")
    return seeds


def _load_dataset(args) -> Dataset:
    name = getattr(args, "name", None)
    return load_csv(args.data, args.label, name=name)


def _write_or_print(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
        print(f"wrote {out}")
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def cmd_discover(args) -> int:
    dataset = _load_dataset(args)
    overrides = {}
    if args.population_size is not None:
        overrides["population_size"] = args.population_size
    if args.generations is not None:
        overrides["generations"] = args.generations
    if args.parsimony is not None:
        overrides["parsimony_coefficient"] = args.parsimony
    if args.tournament_size is not None:
        overrides["tournament_size"] = args.tournament_size

    def observer(stats):
        print(f"generation {stats.generation}: "
              f"best penalized {stats.best_penalized:.4f}  "
              f"{stats.best_formula}")

    record = discover(dataset, fraction=args.fraction, seed=args.seed,
                      gp_overrides=overrides or None, observer=observer)
    out = args.out or f"{dataset.name}.formula"
    save_formula(record, out)
    print(f"raw formula: {record.raw}")
    print(f"activation:  {record.generalized}")
    print(f"wrote {out}")
    return 0


def _resolve_source(args, target_dataset: str):
    if getattr(args, "transfer_from", None):
        if args.activation not in (None, "relu"):
            raise ValueError(
                "use either --activation or --transfer-from, not both")
        return formula_source(args.transfer_from, target_dataset,
                              force_transfer=True)
    token = args.activation or "relu"
    if token.startswith("formula:"):
        return formula_source(token[len("formula:"):], target_dataset)
    return builtin_source(token)


def cmd_train(args) -> int:
    dataset = _load_dataset(args)
    source = _resolve_source(args, dataset.name)
    record = run_experiment(
        dataset, args.arch, source,
        seeds=_parse_seeds(args.seeds),
        epochs=args.epochs, batch_size=args.batch_size,
        learning_rate=args.learning_rate, precision=args.precision,
        discovery_fraction=args.discovery_fraction,
        discovery_seed=args.discovery_seed,
        dataset_meta={"path": str(args.data), "label": args.label})
    agg = record.aggregate
    print(f"{record.model['arch'].capitalize()} {record.model['label']} "
          f"on {dataset.name}: "
          f"accuracy {agg['accuracy_mean']:.3f} ± {agg['accuracy_std']:.3f}, "
          f"auc {agg['auc_mean']:.3f} ± {agg['auc_std']:.3f}, "
          f"params {record.model['params']:,}, "
          f"efficiency {agg['efficiency_mean']:.3f}")
    if args.out:
        save_record(record, args.out)
        print(f"wrote {args.out}")
    return 0


def cmd_benchmark(args) -> int:
    config = load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def progress(message):
        print(message)

    records = run_benchmark(config, progress=progress)
    failed = []
    for record in records:
        stem = f"{record.dataset.get('name', 'dataset')}-" \
               f"{record.model.get('name', 'model')}"
        save_record(record, out_dir / f"{stem}.json")
        if record.error is not None:
            failed.append((stem, record.error))
    matrix_path = out_dir / f"benchmark.{args.format}"
    matrix_path.write_text(render_matrix(records, args.format))
    improvements_path = out_dir / f"improvements.{args.format}"
    improvements_path.write_text(render_improvements(records, args.format))
    print(f"wrote {matrix_path}")
    print(f"wrote {improvements_path}")
    for stem, error in failed:
        print(f"failed cell {stem}: {error}", file=sys.stderr)
    return 1 if failed else 0


def _curve_activations(tokens, grid_hint: str):
    named = []
    for token in tokens:
        if token in BUILTIN_ACTIVATIONS:
            named.append((token, make_activation(token)))
        elif token.startswith("formula:"):
            path = token[len("formula:"):]
            loaded = load_formula(path)
            named.append((Path(path).stem, make_activation(loaded.activation)))
        else:
            formula = parse_formula(token)
            if formula.used_features:
                raise ValueError(
                    f"formula {token!r} references data features; "
                    f"curves need a single-variable activation "
                    f"(generalize it first, or pass formula:PATH {grid_hint})")
            named.append((token, make_activation(formula)))
    return named


def cmd_curves(args) -> int:
    named = _curve_activations(args.activations,
                               grid_hint="written by `symact discover`")
    text = render_curves_csv(named, lo=args.xmin, hi=args.xmax,
                             step=args.step)
    _write_or_print(text, args.out)
    return 0


def cmd_gradcheck(args) -> int:
    tolerance = args.tolerance
    if tolerance is None:
        tolerance = 1e-5 if args.precision == "f64" else 1e-3
    seeds = tuple(args.seed + i for i in range(3))
    reports = run_suite(seeds=seeds, step=args.step, dtype=args.precision)
    worst_by_group: dict[str, float] = {}
    all_pass = True
    for report in reports:
        status = "pass" if report.passed(tolerance) else "FAIL"
        all_pass &= report.passed(tolerance)
        print(f"{status}  {report.activation:<22} seed={report.seed} "
              f"max_rel={report.max_relative_error:.3e} "
              f"(batch attempts: {report.batch_attempts})")
        for group, err in report.per_parameter.items():
            worst_by_group[group] = max(worst_by_group.get(group, 0.0), err)
    print("\nworst relative error per parameter group:")
    for group in sorted(worst_by_group):
        print(f"  {group:<12} {worst_by_group[group]:.3e}")
    print(f"\ntolerance {tolerance:.1e} ({args.precision}): "
          f"{'all checks passed' if all_pass else 'FAILED'}")
    return 0 if all_pass else 1


def cmd_report(args) -> int:
    records = load_records(*args.records)
    if not records:
        raise ValueError("no run records found at the given paths")
    text = render_matrix(records, args.format)
    if args.format == "md" and not args.improvements_out:
        text = text + "\n" + render_improvements(records, "md")
    _write_or_print(text, args.out)
    if args.improvements_out:
        Path(args.improvements_out).write_text(
            render_improvements(records, args.format))
        print(f"wrote {args.improvements_out}")
    return 0


def _add_dataset_arguments(parser) -> None:
    parser.add_argument("--data", required=True, help="path to a CSV file")
    parser.add_argument("--label", required=True,
                        help="label column name, or 0-based index")
    parser.add_argument("--name", default=None,
                        help="dataset display name (default: file stem)")


def _add_train_arguments(parser) -> None:
    parser.add_argument("--arch", choices=sorted(ARCH_HIDDEN), required=True)
    parser.add_argument("--activation", default=None,
                        help="relu, gelu, silu, or formula:PATH "
                             "(default relu)")
    parser.add_argument("--transfer-from", default=None, metavar="PATH",
                        help="formula file discovered on another dataset")
    parser.add_argument("--seeds", default="42,43,44",
                        help="comma-separated seed list")
    parser.add_argument("--epochs", type=int, default=15)
    parser.add_argument("--batch-size", type=int, default=1024)
    parser.add_argument("--learning-rate", type=float, default=0.001)
    parser.add_argument("--precision", choices=("f32", "f64"), default="f32")
    parser.add_argument("--discovery-fraction", type=float, default=0.1,
                        help="fraction of rows reserved for formula "
                             "discovery and excluded from train and test")
    parser.add_argument("--discovery-seed", type=int, default=42)
    parser.add_argument("--out", default=None,
                        help="write the run record to this JSON file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="symact",
        description="Evolve symbolic activation functions and benchmark "
                    "them inside small neural networks.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("discover",
                       help="evolve an activation formula from data")
    _add_dataset_arguments(p)
    p.add_argument("--fraction", type=float, default=0.1,
                   help="stratified fraction of rows used for discovery")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--population-size", type=int, default=None)
    p.add_argument("--generations", type=int, default=None)
    p.add_argument("--parsimony", type=float, default=None)
    p.add_argument("--tournament-size", type=int, default=None)
    p.add_argument("--out", default=None,
                   help="formula file to write (default <name>.formula)")
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("train", help="train one model configuration")
    _add_dataset_arguments(p)
    _add_train_arguments(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("benchmark",
                       help="run a dataset-by-model benchmark matrix")
    p.add_argument("--config", required=True, help="INI config file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", choices=FORMATS, default="md")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("curves",
                       help="export activation value/derivative curves")
    p.add_argument("activations", nargs="+",
                   help="relu, gelu, silu, formula:PATH, or a "
                        "single-variable formula such as 'mul(cos(x), x)'")
    p.add_argument("--xmin", type=float, default=-5.0)
    p.add_argument("--xmax", type=float, default=5.0)
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("gradcheck",
                       help="verify analytic gradients numerically")
    p.add_argument("--seed", type=int, default=0,
                   help="first of three consecutive seeds")
    p.add_argument("--precision", choices=("f32", "f64"), default="f64")
    p.add_argument("--tolerance", type=float, default=None,
                   help="max relative error (default 1e-5 for f64, "
                        "1e-3 for f32)")
    p.add_argument("--step", type=float, default=DEFAULT_STEP)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("report", help="re-render saved run records")
    p.add_argument("records", nargs="+",
                   help="record JSON files or directories of them")
    p.add_argument("--format", choices=FORMATS, default="md")
    p.add_argument("--out", default=None, help="output path (default stdout)")
    p.add_argument("--improvements-out", default=None,
                   help="write the improvement summary to its own file")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
