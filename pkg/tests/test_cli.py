import csv
import json
import subprocess
import sys

import pytest

from byzfuse import bench
from byzfuse.cli import EXIT_ACCEPTANCE, EXIT_CAPACITY, EXIT_CONFIG, EXIT_OK, build_parser, main


def test_all_subcommands_registered():
    sub = next(a for a in build_parser()._actions if a.dest == "command")
    assert set(sub.choices) == {"generate", "train", "evaluate", "reproduce-table", "sweep-alpha", "sweep-grid",
                                "sweep-samples", "timing", "gradcheck"}


def test_global_flags_either_side():
    a = build_parser().parse_args(["--seed", "4", "gradcheck"])
    b = build_parser().parse_args(["gradcheck", "--seed", "4"])
    assert a.seed == b.seed == 4


def test_gradcheck_ok(capsys):
    assert main(["gradcheck"]) == EXIT_OK
    assert "max_rel_err" in capsys.readouterr().out


def test_gradcheck_failure_code():
    assert main(["gradcheck", "--tolerance", "1e-30"]) == EXIT_ACCEPTANCE


def test_underpowered_table(capsys):
    assert main(["reproduce-table", "table1", "--samples", "100"]) == EXIT_CAPACITY
    assert "2500" in capsys.readouterr().err


def test_config_error(tmp_path, capsys):
    plan = tmp_path / "p.yaml"
    plan.write_text("schema_version: 1\nks: [30]\nrules: [maj]\n")
    assert main(["--plan", str(plan), "evaluate"]) == EXIT_CONFIG
    assert "k exceeds n" in capsys.readouterr().err


def test_grid_budget_refusal():
    assert main(["sweep-grid", "--ns", "100", "--ms", "20"]) == EXIT_CAPACITY


def test_evaluate_plan_writes_results(tmp_path):
    plan = bench.ExperimentPlan(alphas=[0.3], n_values=[6], m_values=[2], rules=["maj", "opt"])
    bench.save_plan(plan, tmp_path / "p.yaml")
    out = tmp_path / "run"
    assert main(["--plan", str(tmp_path / "p.yaml"), "--samples", "200", "--out", str(out), "evaluate"]) == EXIT_OK
    lines = (out / "results.csv").read_text().splitlines()
    assert len(lines) == 3
    assert json.loads((out / "manifest.json").read_text())["plan"]["mc_samples"] == 200


def test_generate_train_evaluate(tmp_path, capsys):
    data, model = tmp_path / "data", tmp_path / "model"
    assert main(["generate", "--n", "5", "--m", "2", "--samples", "4", "--out", str(data)]) == EXIT_OK
    assert (data / "samples.txt").exists()
    assert main(["train", "--data", str(data), "--epochs", "2", "--out", str(model)]) == EXIT_OK
    assert (model / "checkpoint.json").exists()
    capsys.readouterr()
    assert main(["evaluate", "--checkpoint", str(model / "checkpoint.json"), "--data", str(data)]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["accuracy"] == 1.0 - report["pe"]


def test_sweep_check_exit_code_follows_accuracy(tmp_path):
    code = main(["sweep-grid", "--ns", "4", "--ms", "2", "--samples", "3", "--out", str(tmp_path), "--check"])
    rows = list(csv.DictReader((tmp_path / "grid.csv").open()))
    below = min(float(r["accuracy"]) for r in rows) < bench.load_reference_values()["claims"]["grid_min_accuracy"]
    assert code == (EXIT_ACCEPTANCE if below else EXIT_OK)


def test_timing_json(tmp_path):
    assert main(["timing", "--samples", "3", "--hardware-note", "ci", "--out", str(tmp_path)]) == EXIT_OK
    rep = json.loads((tmp_path / "timing.json").read_text())
    assert rep["hardware_note"] == "ci"


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "byzfuse", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "reproduce-table" in proc.stdout


def test_unknown_subcommand():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == EXIT_CONFIG
