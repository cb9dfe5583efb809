"""Benchmark harness: config files, artifacts, protocol, reports, CLI."""

import csv
import io
import json
from dataclasses import asdict

import numpy as np
import pytest

from symact.data import save_csv, synth_planted
from symact.harness.cli import main
from symact.harness.config import ConfigError, load_config
from symact.harness.protocol import (builtin_source, discover,
                                     formula_source, resolved_defaults,
                                     run_benchmark, run_experiment)
from symact.harness.records import (SCHEMA_VERSION, FormulaRecord, RunRecord,
                                    load_formula, load_records, save_formula,
                                    save_record)
from symact.harness.reports import (curve_grid, improvement_rows,
                                    render_curves_csv, render_improvements,
                                    render_matrix)
from symact.metrics import EvalResult, aggregate, efficiency, improvement
from symact.network import make_activation, param_count_formula

GOOD_CONFIG = """
[run]
seeds = 1, 2
epochs = 1
batch_size = 128
learning_rate = 0.01
precision = f32

[dataset:planted]
path = {csv}
label = label
formula = {formula}

[model:light-relu]
arch = light
activation = relu

[model:light-spec]
arch = light
activation = specialist
"""


@pytest.fixture(scope="module")
def planted_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "planted.csv"
    save_csv(synth_planted(400, 3, seed=5), path)
    return path


@pytest.fixture(scope="module")
def formula_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("formulas") / "planted.formula"
    record = FormulaRecord(
        raw="add(sin(X0), mul(X1, X2))",
        generalized="add(sin(x), mul(x, x))",
        source_dataset="planted", discovery_seed=42,
        gp_config={}, history=[], pair_collapse_applied=False)
    save_formula(record, path)
    return path


def write_config(tmp_path, text):
    path = tmp_path / "bench.ini"
    path.write_text(text)
    return path


# -- configuration files --


def test_config_round_trip(tmp_path, planted_csv, formula_file):
    path = write_config(tmp_path, GOOD_CONFIG.format(
        csv=planted_csv, formula=formula_file))
    config = load_config(path)
    assert config.run.seeds == (1, 2)
    assert config.run.epochs == 1
    assert config.run.learning_rate == 0.01
    assert config.run.precision == "f32"
    assert [d.name for d in config.datasets] == ["planted"]
    assert config.datasets[0].formula == str(formula_file)
    assert [(m.name, m.activation) for m in config.models] == [
        ("light-relu", "relu"), ("light-spec", "specialist")]


def test_config_run_section_is_optional(tmp_path):
    path = write_config(tmp_path, """
[dataset:d]
path = d.csv
label = y

[model:m]
arch = light
activation = gelu
""")
    config = load_config(path)
    assert config.run.seeds == (42, 43, 44)
    assert config.run.epochs == 15
    assert config.run.batch_size == 1024
    assert config.run.discovery_fraction == 0.1


MINIMAL = """
[dataset:d]
path = d.csv
label = y

[model:m]
arch = light
activation = relu
"""


@pytest.mark.parametrize("text, fragment", [
    ("[run]\nspeed = 3\n" + MINIMAL, "unknown key"),
    ("[general]\nx = 1\n" + MINIMAL, "unknown section"),
    (MINIMAL.replace("activation = relu", "activation = tanh"),
     "activation must be one of"),
    (MINIMAL.replace("arch = light", "arch = wide"), "arch must be"),
    (MINIMAL.replace("activation = relu", "activation = transfer"),
     "transfer models need a formula"),
    (MINIMAL.replace("activation = relu",
                     "activation = relu\nformula = f.formula"),
     "does not take a formula"),
    (MINIMAL.replace("activation = relu", "activation = specialist"),
     "requires a formula key on every dataset"),
    (MINIMAL + "\n[dataset:d]\npath = other.csv\nlabel = y\n",
     "duplicate"),
    (MINIMAL.replace("path = d.csv\n", ""), "missing required key"),
    ("[run]\nseeds = 1, two\n" + MINIMAL, "seeds must be integers"),
    ("[run]\nepochs = soon\n" + MINIMAL, "epochs must be int"),
    ("[run]\nprecision = f16\n" + MINIMAL, "precision must be"),
    ("[dataset:d]\npath = d.csv\nlabel = y\n", "no [model:"),
    ("[model:m]\narch = light\nactivation = relu\n", "no [dataset:"),
])
def test_config_rejects_bad_input(tmp_path, text, fragment):
    # configparser collapses duplicate sections itself
    if "duplicate" in fragment:
        import configparser
        with pytest.raises((ConfigError, configparser.Error)):
            load_config(write_config(tmp_path, text))
        return
    with pytest.raises(ConfigError, match=__import__("re").escape(fragment)):
        load_config(write_config(tmp_path, text))


def test_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.ini")


# -- formula files and run records --


def test_formula_round_trip(tmp_path):
    record = FormulaRecord(
        raw="add(X6, mul(X52, cos(X51)))",
        generalized="add(x, mul(x, cos(x)))",
        source_dataset="mail", discovery_seed=42,
        gp_config={"population_size": 500}, history=[{"generation": 1}],
        pair_collapse_applied=False)
    path = tmp_path / "mail.formula"
    save_formula(record, path)

    assert path.read_text().splitlines()[0] == "add(X6, mul(X52, cos(X51)))"
    loaded = load_formula(path)
    assert str(loaded.raw) == "add(X6, mul(X52, cos(X51)))"
    assert str(loaded.activation) == "add(x, mul(x, cos(x)))"
    assert loaded.pair_collapse_applied is False
    assert loaded.record == record


def test_formula_file_without_sidecar(tmp_path):
    path = tmp_path / "bare.formula"
    path.write_text("mul(cos(X25), sub(X12, X3))\n")
    loaded = load_formula(path)
    assert loaded.record is None
    assert str(loaded.activation) == "mul(cos(x), x)"
    assert loaded.pair_collapse_applied is True


def test_formula_file_empty_is_an_error(tmp_path):
    path = tmp_path / "empty.formula"
    path.write_text("\n")
    with pytest.raises(ValueError, match="empty"):
        load_formula(path)


def test_formula_sidecar_schema_version_checked(tmp_path):
    path = tmp_path / "f.formula"
    save_formula(FormulaRecord(
        raw="sin(X0)", generalized="sin(x)", source_dataset="d",
        discovery_seed=1, gp_config={}, history=[],
        pair_collapse_applied=False), path)
    sidecar = tmp_path / "f.formula.meta.json"
    meta = json.loads(sidecar.read_text())
    meta["schema_version"] = 999
    sidecar.write_text(json.dumps(meta))
    with pytest.raises(ValueError, match="schema version"):
        load_formula(path)


def synthetic_record(dataset="planted", model_name="light-relu",
                     arch="light", activation="relu", kind="builtin",
                     label="ReLU", params=2561, aucs=(0.90, 0.92),
                     error=None):
    if error is not None:
        return RunRecord(
            dataset={"name": dataset}, model={
                "name": model_name, "arch": arch, "activation": activation,
                "activation_kind": kind, "label": label, "params": None},
            train_config={}, protocol={}, seeds=[1, 2], results=[],
            aggregate={}, wall_seconds=0.0,
            resolved_defaults=resolved_defaults(), error=error)
    evals = [EvalResult(a, a, params, efficiency(a, params), seed)
             for seed, a in enumerate(aucs, start=1)]
    results = [{"seed": e.seed, "accuracy": e.accuracy, "auc": e.auc,
                "params": e.params, "efficiency": e.efficiency,
                "final_train_loss": 0.4, "test_rows_sha256": "aa"}
               for e in evals]
    return RunRecord(
        dataset={"name": dataset},
        model={"name": model_name, "arch": arch, "activation": activation,
               "activation_kind": kind, "label": label, "params": params},
        train_config={"epochs": 1}, protocol={}, seeds=[1, 2],
        results=results, aggregate=asdict(aggregate(evals)),
        wall_seconds=0.1, resolved_defaults=resolved_defaults())


def test_run_record_round_trip(tmp_path):
    record = synthetic_record()
    path = tmp_path / "cell.json"
    save_record(record, path)
    back = load_records(path)
    assert back == [record]
    assert back[0].eval_results() == record.eval_results()
    assert back[0].aggregate_result().params == 2561


def test_load_records_scans_directories(tmp_path):
    a = synthetic_record(model_name="a")
    b = synthetic_record(model_name="b")
    save_record(a, tmp_path / "a.json")
    save_record(b, tmp_path / "b.json")
    (tmp_path / "x.formula.meta.json").write_text("{}")
    records = load_records(tmp_path)
    assert {r.model["name"] for r in records} == {"a", "b"}


def test_load_records_accepts_report_lists(tmp_path):
    records = [synthetic_record(model_name="a"),
               synthetic_record(model_name="b")]
    path = tmp_path / "report.json"
    path.write_text(render_matrix(records, "json"))
    assert load_records(path) == records


def test_load_records_rejects_other_schema(tmp_path):
    data = asdict(synthetic_record())
    data["schema_version"] = SCHEMA_VERSION + 1
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    with pytest.raises(ValueError, match="schema version"):
        load_records(path)


# -- protocol --


def test_resolved_defaults_snapshot():
    defaults = resolved_defaults()
    assert defaults["gp_population_size"] == 500
    assert defaults["gp_generations"] == 5
    assert defaults["bn_momentum"] == 0.1
    assert defaults["adam_beta2"] == 0.999
    assert "discovery_exclusion" in defaults


def test_builtin_source_labels():
    assert builtin_source("relu").label == "ReLU"
    assert builtin_source("gelu").label == "GELU"
    assert builtin_source("silu").label == "SiLU"
    with pytest.raises(ValueError, match="unknown builtin"):
        builtin_source("tanh")


def test_formula_source_classification(formula_file):
    # recorded origin "planted": same target means specialist
    source = formula_source(formula_file, "planted")
    assert source.kind == "specialist"
    assert source.label == "Specialist (planted)"
    assert source.raw_text == "add(sin(X0), mul(X1, X2))"
    assert source.generalized_text == "add(sin(x), mul(x, x))"

    other = formula_source(formula_file, "elsewhere")
    assert other.kind == "transfer"
    assert other.label == "Transfer (planted)"

    forced = formula_source(formula_file, "planted", force_transfer=True)
    assert forced.kind == "transfer"


def test_formula_source_without_sidecar_defaults_to_specialist(tmp_path):
    path = tmp_path / "bare.formula"
    path.write_text("sin(X1)\n")
    source = formula_source(path, "whatever")
    assert source.kind == "specialist"
    assert source.source_dataset is None


def test_discover_is_deterministic_and_documented():
    dataset = synth_planted(600, 3, seed=9)
    overrides = {"population_size": 40, "generations": 2}
    a = discover(dataset, fraction=0.5, seed=7, gp_overrides=overrides)
    b = discover(dataset, fraction=0.5, seed=7, gp_overrides=overrides)
    assert a.raw == b.raw
    assert a.source_dataset == "planted-9"
    assert a.discovery_seed == 7
    assert a.gp_config["population_size"] == 40
    assert len(a.history) == 2
    assert isinstance(a.pair_collapse_applied, bool)


def test_run_experiment_protocol_fidelity():
    dataset = synth_planted(400, 3, seed=3)
    kwargs = dict(seeds=(1, 2), epochs=1, batch_size=128)
    relu_run = run_experiment(dataset, "light", builtin_source("relu"),
                              **kwargs)
    silu_run = run_experiment(dataset, "light", builtin_source("silu"),
                              **kwargs)

    # identical seeds must evaluate on identical test rows regardless of
    # the activation under test
    for a, b in zip(relu_run.results, silu_run.results):
        assert a["seed"] == b["seed"]
        assert a["test_rows_sha256"] == b["test_rows_sha256"]

    assert relu_run.model["params"] == param_count_formula("light", 3)
    for row in relu_run.results:
        assert row["efficiency"] == efficiency(row["auc"], row["params"])
    assert relu_run.aggregate == asdict(aggregate(relu_run.eval_results()))
    assert relu_run.seeds == [1, 2]
    assert relu_run.model["label"] == "ReLU"
    assert relu_run.protocol["discovery_fraction"] == 0.1


def test_run_experiment_is_deterministic():
    dataset = synth_planted(300, 3, seed=4)
    runs = [run_experiment(dataset, "light", builtin_source("relu"),
                           seeds=(5,), epochs=1, batch_size=64)
            for _ in range(2)]
    assert runs[0].results == runs[1].results


def test_run_experiment_symbolic_model_metadata(formula_file):
    dataset = synth_planted(300, 3, seed=4)
    source = formula_source(formula_file, "other-target")
    record = run_experiment(dataset, "light", source, seeds=(1,), epochs=1,
                            batch_size=64)
    assert record.model["activation"] == "symbolic"
    assert record.model["activation_kind"] == "transfer"
    assert record.model["formula_raw"] == "add(sin(X0), mul(X1, X2))"
    assert record.model["formula_generalized"] == "add(sin(x), mul(x, x))"
    assert record.model["formula_path"] == str(formula_file)


def test_run_benchmark_records_every_cell(tmp_path, planted_csv,
                                          formula_file):
    config = load_config(write_config(tmp_path, GOOD_CONFIG.format(
        csv=planted_csv, formula=formula_file)))
    seen = []
    records = run_benchmark(config, progress=seen.append)
    assert len(records) == 2
    assert seen == ["planted / light-relu", "planted / light-spec"]
    assert all(r.error is None for r in records)
    assert [r.model["name"] for r in records] == ["light-relu", "light-spec"]
    assert records[1].model["activation_kind"] == "specialist"


def test_run_benchmark_keeps_going_after_failures(tmp_path, formula_file):
    config = load_config(write_config(tmp_path, GOOD_CONFIG.format(
        csv=tmp_path / "missing.csv", formula=formula_file)))
    records = run_benchmark(config)
    assert len(records) == 2
    assert all(r.error is not None for r in records)
    assert all("dataset failed to load" in r.error for r in records)
    assert [r.model["name"] for r in records] == ["light-relu", "light-spec"]


# -- reports --


def test_matrix_markdown_shape():
    records = [
        synthetic_record(model_name="light-relu", aucs=(0.90, 0.92)),
        synthetic_record(model_name="heavy-relu", arch="heavy",
                         params=22001, aucs=(0.95, 0.97)),
        synthetic_record(model_name="broken", error="boom"),
    ]
    text = render_matrix(records, "md")
    assert "## planted" in text
    assert "| Model | Accuracy | AUC | Params | Efficiency |" in text
    assert "22,001" in text
    # heavy model has lower efficiency, light lands last and is bolded
    lines = [l for l in text.splitlines() if l.startswith("|")]
    assert lines[-2].startswith("| **Light ReLU** |")
    assert lines[-1].startswith("| Light ReLU | failed: boom |")


def test_matrix_csv_is_machine_readable():
    records = [synthetic_record(aucs=(0.90, 0.92)),
               synthetic_record(model_name="bad", error="nope")]
    rows = list(csv.reader(io.StringIO(render_matrix(records, "csv"))))
    assert rows[0][:4] == ["dataset", "model", "arch", "activation"]
    assert rows[1][0] == "planted"
    assert float(rows[1][6]) == pytest.approx(0.91)
    assert rows[2][-1] == "nope"


def test_matrix_json_round_trips(tmp_path):
    records = [synthetic_record(model_name="a"),
               synthetic_record(model_name="b", error="x")]
    path = tmp_path / "matrix.json"
    path.write_text(render_matrix(records, "json"))
    assert load_records(path) == records


def test_matrix_rejects_unknown_format():
    with pytest.raises(ValueError, match="unknown format"):
        render_matrix([], "xml")


def test_improvement_rows_pick_baseline_and_best_hybrid():
    heavy = synthetic_record(model_name="heavy-relu", arch="heavy",
                             params=22001, aucs=(0.95, 0.95))
    weak = synthetic_record(model_name="light-spec", activation="symbolic",
                            kind="specialist", label="Specialist (planted)",
                            aucs=(0.80, 0.80))
    strong = synthetic_record(model_name="light-trans", activation="symbolic",
                              kind="transfer", label="Transfer (other)",
                              aucs=(0.93, 0.93))
    plain = synthetic_record(model_name="light-relu", aucs=(0.99, 0.99))

    rows = improvement_rows([heavy, weak, strong, plain])
    assert len(rows) == 1
    row = rows[0]
    # the plain light model is ignored: only symbolic activations count
    assert row["hybrid_model"] == "Light Transfer (other)"
    gain, reduction = improvement(strong.aggregate_result(),
                                  heavy.aggregate_result())
    assert row["efficiency_gain_percent"] == gain
    assert row["param_reduction"] == reduction
    assert improvement_rows([weak, strong, plain]) == []


def test_render_improvements_markdown():
    heavy = synthetic_record(model_name="heavy-relu", arch="heavy",
                             params=22001, aucs=(0.95, 0.95))
    hybrid = synthetic_record(model_name="light-spec", activation="symbolic",
                              kind="specialist", label="Specialist (planted)",
                              aucs=(0.93, 0.93))
    text = render_improvements([heavy, hybrid], "md")
    row = [l for l in text.splitlines() if l.startswith("| planted")][0]
    assert "Light Specialist (planted)" in row
    assert "%" in row and "x |" in row
    reduction = 22001 / 2561
    assert f"{reduction:.1f}x" in row


def test_curve_grid_hits_endpoints_exactly():
    xs = curve_grid(-5.0, 5.0, 0.05)
    assert xs.size == 201
    assert xs[0] == -5.0 and xs[-1] == 5.0
    assert 0.0 in xs
    with pytest.raises(ValueError):
        curve_grid(1.0, -1.0, 0.05)
    with pytest.raises(ValueError):
        curve_grid(0.0, 1.0, 0.0)


def test_render_curves_csv_columns():
    text = render_curves_csv([("relu", make_activation("relu")),
                              ("square", make_activation("mul(x, x)"))],
                             lo=-1.0, hi=1.0, step=0.5)
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["x", "relu", "relu_derivative",
                       "square", "square_derivative"]
    assert len(rows) == 1 + 5
    middle = rows[3]
    assert [float(v) for v in middle] == [0.0, 0.0, 0.0, 0.0, 0.0]
    last = rows[-1]
    assert [float(v) for v in last] == [1.0, 1.0, 1.0, 1.0, 2.0]
    with pytest.raises(ValueError, match="duplicate"):
        render_curves_csv([("a", make_activation("relu")),
                           ("a", make_activation("silu"))])


# -- command line --


def test_cli_discover_writes_formula(tmp_path, planted_csv, capsys):
    out = tmp_path / "planted.formula"
    code = main(["discover", "--data", str(planted_csv), "--label", "label",
                 "--fraction", "0.5", "--seed", "3",
                 "--population-size", "40", "--generations", "2",
                 "--out", str(out)])
    assert code == 0
    assert out.exists()
    assert (tmp_path / "planted.formula.meta.json").exists()
    captured = capsys.readouterr().out
    assert "generation 1:" in captured
    assert "raw formula:" in captured
    loaded = load_formula(out)
    assert loaded.record.discovery_seed == 3


def test_cli_train_writes_record(tmp_path, planted_csv, capsys):
    out = tmp_path / "run.json"
    code = main(["train", "--data", str(planted_csv), "--label", "label",
                 "--arch", "light", "--seeds", "1,2", "--epochs", "1",
                 "--batch-size", "128", "--out", str(out)])
    assert code == 0
    record, = load_records(out)
    assert record.model["label"] == "ReLU"
    assert record.seeds == [1, 2]
    assert "Light ReLU on planted" in capsys.readouterr().out


def test_cli_train_with_formula_activation(tmp_path, planted_csv,
                                           formula_file, capsys):
    code = main(["train", "--data", str(planted_csv), "--label", "label",
                 "--name", "planted",
                 "--arch", "light", "--activation",
                 f"formula:{formula_file}", "--seeds", "1", "--epochs", "1",
                 "--batch-size", "128"])
    assert code == 0
    assert "Specialist (planted)" in capsys.readouterr().out


def test_cli_train_rejects_conflicting_activation_flags(tmp_path, planted_csv,
                                                        formula_file, capsys):
    code = main(["train", "--data", str(planted_csv), "--label", "label",
                 "--arch", "light", "--activation", "gelu",
                 "--transfer-from", str(formula_file)])
    assert code == 1
    assert "not both" in capsys.readouterr().err


def test_cli_train_reports_missing_data(tmp_path, capsys):
    code = main(["train", "--data", str(tmp_path / "nope.csv"),
                 "--label", "y", "--arch", "light"])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_cli_benchmark_end_to_end(tmp_path, planted_csv, formula_file):
    config = write_config(tmp_path, GOOD_CONFIG.format(
        csv=planted_csv, formula=formula_file))
    out = tmp_path / "results"
    code = main(["benchmark", "--config", str(config), "--out", str(out)])
    assert code == 0
    assert (out / "planted-light-relu.json").exists()
    assert (out / "planted-light-spec.json").exists()
    assert (out / "benchmark.md").exists()
    assert (out / "improvements.md").exists()
    assert len(load_records(out)) == 2


def test_cli_benchmark_flags_failed_cells(tmp_path, formula_file, capsys):
    config = write_config(tmp_path, GOOD_CONFIG.format(
        csv=tmp_path / "missing.csv", formula=formula_file))
    out = tmp_path / "results"
    code = main(["benchmark", "--config", str(config), "--out", str(out)])
    assert code == 1
    assert "failed cell" in capsys.readouterr().err
    records = load_records(out / "planted-light-relu.json")
    assert records[0].error is not None
    assert (out / "benchmark.md").exists()


def test_cli_curves(tmp_path, capsys):
    out = tmp_path / "curves.csv"
    code = main(["curves", "relu", "mul(cos(x), x)", "--xmin", "-1",
                 "--xmax", "1", "--step", "0.5", "--out", str(out)])
    assert code == 0
    rows = list(csv.reader(io.StringIO(out.read_text())))
    assert rows[0] == ["x", "relu", "relu_derivative",
                       "mul(cos(x), x)", "mul(cos(x), x)_derivative"]

    code = main(["curves", "mul(cos(X2), X1)"])
    assert code == 1
    assert "references data features" in capsys.readouterr().err


def test_cli_report_renders_records(tmp_path, capsys):
    save_record(synthetic_record(model_name="light-relu"),
                tmp_path / "a.json")
    save_record(synthetic_record(model_name="heavy-relu", arch="heavy",
                                 params=22001, aucs=(0.8, 0.8)),
                tmp_path / "b.json")
    code = main(["report", str(tmp_path)])
    assert code == 0
    text = capsys.readouterr().out
    assert "| Model | Accuracy | AUC | Params | Efficiency |" in text
    # improvements section is appended, but with no hybrid rows to show
    assert "# Efficiency improvements" in text
    assert not [l for l in text.splitlines()
                if l.startswith("| planted") and "%" in l]

    code = main(["report", str(tmp_path / "does-not-exist.json")])
    assert code == 1


def test_cli_gradcheck_passes(capsys):
    code = main(["gradcheck"])
    assert code == 0
    out = capsys.readouterr().out
    assert out.count("pass") >= 12
    assert "worst relative error per parameter group" in out
    assert "all checks passed" in out


def test_cli_requires_a_command():
    with pytest.raises(SystemExit):
        main([])
    with pytest.raises(SystemExit):
        main(["no-such-command"])
