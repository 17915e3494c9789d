"""
CLI Tests

End-to-end runs of each subcommand on tiny meshes and networks, plus the exit codes.

Usage:
    python3 tests/test_cli.py
"""

import json
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import pytest
import torch

from src import training
from src.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main
from src.report_generator import REPORT_COLUMNS

TINY_PINN = [
    "--set", "method=pinn", "--set", "material=smoothed", "--set", "epsilon=0.5",
    "--set", "architecture=65", "--set", "epochs=3", "--set", "grid_n=8", "--set", "log_every=1",
]


def test_fem_subcommand(tmp_path, capsys):
    assert main(["fem", "--set", "fem_n=8", "--out", str(tmp_path)]) == EXIT_OK
    record = json.loads((tmp_path / "run.json").read_text(encoding="utf-8"))
    assert record["method"] == "fem"
    assert record["final"]["lower_bound"] <= record["metadata"]["exact_reference"] <= record["final"]["upper_bound"]
    assert (tmp_path / "solution_primal.csv").exists()
    assert (tmp_path / "solution_dual.csv").exists()
    assert "FEM BOUNDS (n=8)" in capsys.readouterr().out


def test_invalid_config_exit_code(tmp_path):
    argv = ["train", "--set", "method=pinn", "--set", "material=piecewise", "--out", str(tmp_path)]
    assert main(argv) == EXIT_CONFIG
    assert main(["fem", "--set", "fem_n=12", "--set", "colour=red", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_solver_failure_exit_code(tmp_path):
    assert main(["fem", "--set", "fem_n=16", "--set", "fem_max_iter=1", "--out", str(tmp_path)]) == EXIT_NUMERIC


def test_train_writes_all_artifacts(tmp_path):
    assert main(["train", *TINY_PINN, "--out", str(tmp_path), "--deterministic"]) == EXIT_OK
    for name in ("run.json", "curve.csv", "params_primal.bin", "params_dual.bin", "params_dual.csv",
                 "solution_primal.csv", "solution_dual.csv", "residual_primal.csv", "residual_dual.csv"):
        assert (tmp_path / name).exists(), name
    record = json.loads((tmp_path / "run.json").read_text(encoding="utf-8"))
    assert record["config"]["deterministic"] is True
    assert len(record["history"]) == 3
    torch.use_deterministic_algorithms(False)


def test_aborted_training_keeps_partial_results(tmp_path, monkeypatch):
    def broken_loss(net, material, loading, grid, sample=None):
        return net.params.sum() * float("nan")

    monkeypatch.setattr(training, "strong_primal_loss", broken_loss)
    assert main(["train", *TINY_PINN, "--out", str(tmp_path)]) == EXIT_NUMERIC
    record = json.loads((tmp_path / "run.json").read_text(encoding="utf-8"))
    assert record["status"] == "aborted"
    assert (tmp_path / "params_primal.bin").exists()


def test_report_subcommand(tmp_path):
    run_dir = tmp_path / "fem8"
    assert main(["fem", "--set", "fem_n=8", "--out", str(run_dir)]) == EXIT_OK
    assert main(["report", str(tmp_path), "--xlsx"]) == EXIT_OK
    assert (tmp_path / "report.csv").exists()
    assert (tmp_path / "report.xlsx").exists()
    assert "fem8" in (tmp_path / "report.txt").read_text(encoding="utf-8")


def test_report_without_records(tmp_path):
    assert main(["report", str(tmp_path)]) == EXIT_OK
    lines = (tmp_path / "report.csv").read_text(encoding="utf-8").splitlines()
    assert lines == [",".join(REPORT_COLUMNS)]


def test_report_warns_about_missing_path(tmp_path, caplog):
    run_dir = tmp_path / "fem8"
    assert main(["fem", "--set", "fem_n=8", "--out", str(run_dir)]) == EXIT_OK
    missing = tmp_path / "no_such_run"
    assert main(["report", str(run_dir), str(missing), "--out", str(tmp_path)]) == EXIT_OK
    assert any(str(missing) in r.getMessage() and "not found" in r.getMessage() for r in caplog.records)
    assert len((tmp_path / "report.csv").read_text(encoding="utf-8").splitlines()) == 2


def test_check_subcommand(tmp_path, capsys):
    argv = ["check", "--quick", "--set", "check_samples=2", "--set", "check_grid_n=8", "--out", str(tmp_path)]
    assert main(argv) == EXIT_OK
    assert "Passed: 11/11" in capsys.readouterr().out


def test_sweep_subcommand(tmp_path):
    sweep = tmp_path / "sweep.yaml"
    sweep.write_text("base:\n  method: fem\ngrid:\n  fem_n: [8, 16]\n", encoding="utf-8")
    out = tmp_path / "out"
    assert main(["sweep", "--config", str(sweep), "--out", str(out)]) == EXIT_OK
    assert (out / "fem_n=8" / "run.json").exists()
    assert (out / "fem_n=16" / "run.json").exists()
    report = (out / "report.csv").read_text(encoding="utf-8").splitlines()
    assert len(report) == 3


def test_sweep_sets_determinism_once(tmp_path, monkeypatch):
    calls = []
    monkeypatch.setattr(training, "set_deterministic", lambda enabled: calls.append(enabled))
    sweep = tmp_path / "sweep.yaml"
    sweep.write_text(
        "base:\n  method: pinn\n  material: smoothed\n  epsilon: 0.5\n  architecture: 65\n"
        "  epochs: 2\n  grid_n: 8\n  log_every: 1\ngrid:\n  seed: [0, 1]\nmax_workers: 2\n",
        encoding="utf-8",
    )
    try:
        assert main(["sweep", "--config", str(sweep), "--out", str(tmp_path / "out"), "--deterministic"]) == EXIT_OK
        assert torch.are_deterministic_algorithms_enabled()
    finally:
        torch.use_deterministic_algorithms(False)
    assert calls == []
    record = json.loads((tmp_path / "out" / "seed=0" / "run.json").read_text(encoding="utf-8"))
    assert record["config"]["deterministic"] is True


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
