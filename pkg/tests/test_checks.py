"""
Property Suite Tests

Runs the check suite on small grids (without the full-size FEM benchmark).

Usage:
    python3 tests/test_checks.py
"""

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import pytest

from src import checks
from src.checks import CHECKS, CheckResult, check_fem_benchmark, run_checks
from src.config import RunConfig


@pytest.fixture
def quick_config():
    return RunConfig.from_dict({"check_samples": 3, "check_grid_n": 8})


def test_quick_suite_passes(quick_config):
    results = run_checks(quick_config, include_benchmark=False)
    assert len(results) == len(CHECKS) - 1
    failed = [f"{r.name}: {r.detail}" for r in results if not r.passed]
    assert failed == []


def test_benchmark_check_on_a_coarse_mesh():
    config = RunConfig.from_dict({"fem_n": 16})
    result = check_fem_benchmark(config)
    assert not result.passed
    assert "upper" in result.detail


def test_raising_check_is_reported_as_failed(monkeypatch, quick_config):
    def broken(config):
        raise RuntimeError("boom")

    monkeypatch.setattr(checks, "CHECKS", [broken, lambda config: CheckResult("fine", True)])
    results = run_checks(quick_config)
    assert [r.passed for r in results] == [False, True]
    assert "RuntimeError: boom" in results[0].detail


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
