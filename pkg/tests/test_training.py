"""
Training Tests

Adam arithmetic, loss specifications, and short training runs of each loss form on
small grids (a few epochs each, so the suite stays fast).

Usage:
    python3 tests/test_training.py
"""

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import pytest
import torch

from src import cell_material as cm
from src import training
from src.autodiff import DTYPE
from src.errors import MaterialError, NonFiniteError, TrainingAborted
from src.network import NetworkConfig, init, zeros
from src.training import AdamState, LossSpec, TrainConfig, adam_step, train, train_primal_dual
from src.weak_bases import build_spectral

SMALL = NetworkConfig(4, 4, 1)


def small_config(**kwargs) -> TrainConfig:
    defaults = {"epochs": 3, "grid_n": 8, "log_every": 1}
    defaults.update(kwargs)
    return TrainConfig(**defaults)


# -- Adam ---------------------------------------------------------------------------------

def test_adam_zero_gradient_keeps_parameters():
    params = torch.tensor([1.0, -2.0], dtype=DTYPE)
    new, state = adam_step(params, torch.zeros(2, dtype=DTYPE), AdamState.zeros(2), TrainConfig())
    assert torch.equal(new, params)
    assert state.t == 1


def test_adam_first_step_is_normalized():
    params = torch.zeros(3, dtype=DTYPE)
    grads = torch.tensor([0.5, -4.0, 1e-3], dtype=DTYPE)
    config = TrainConfig(learning_rate=0.01)
    new, _ = adam_step(params, grads, AdamState.zeros(3), config)
    expected = -config.learning_rate * grads / (grads.abs() + config.adam_eps)
    assert torch.allclose(new, expected, rtol=1e-12, atol=0.0)


def test_adam_minimizes_a_quadratic():
    params = torch.tensor([1.0, -2.0], dtype=DTYPE)
    state = AdamState.zeros(2)
    config = TrainConfig(learning_rate=0.01)
    for _ in range(3000):
        params, state = adam_step(params, params.clone(), state, config)
    assert float(params.abs().max()) < 0.05


def test_adam_errors():
    state = AdamState.zeros(2)
    with pytest.raises(ValueError):
        adam_step(torch.zeros(3, dtype=DTYPE), torch.zeros(3, dtype=DTYPE), state, TrainConfig())
    with pytest.raises(NonFiniteError):
        adam_step(torch.zeros(2, dtype=DTYPE), torch.tensor([1.0, float("inf")], dtype=DTYPE), state, TrainConfig())


# -- configuration ------------------------------------------------------------------------

def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(log_every=0)


def test_loss_spec_validation():
    with pytest.raises(MaterialError):
        LossSpec("strong", "primal", cm.piecewise())
    with pytest.raises(ValueError):
        LossSpec("weak", "dual", cm.piecewise())
    with pytest.raises(ValueError):
        LossSpec("weak", "both", cm.piecewise(), basis=build_spectral(1, 1))


# -- runs ---------------------------------------------------------------------------------

def test_homogeneous_cell_stays_at_exact_value():
    spec = LossSpec("strong", "primal", cm.smoothed(0.1, 1.0, 1.0))
    net, record = train(zeros(SMALL), spec, small_config())
    assert torch.equal(net.params, zeros(SMALL).params)
    assert record.final["primal_estimate"] == pytest.approx(1.0, rel=1e-14)
    assert record.final["upper_bound"] == pytest.approx(1.0, rel=1e-14)
    assert record.final_loss["primal"] == 0.0
    assert record.suspected_failure is None


def test_strong_form_training_reduces_loss():
    material = cm.smoothed(0.5)
    specs = {side: LossSpec("strong", side, material) for side in ("primal", "dual")}
    nets = {"primal": init(SMALL, 0), "dual": init(SMALL, 1)}
    _, record = train_primal_dual(nets, specs, small_config(epochs=50, learning_rate=5e-3, grid_n=16, log_every=10))
    first = record.history[0]
    assert record.final_loss["primal"] < first["primal_loss"]
    assert record.final_loss["dual"] < first["dual_loss"]
    assert record.final["lower_bound"] <= record.final["exact_reference"] <= record.final["upper_bound"]
    assert isinstance(record.suspected_failure, bool)
    assert record.metadata["bounds_material"] == "piecewise"
    assert record.metadata["dual_estimate_convention"] == "reciprocal of B11"


def test_history_is_logged_every_log_every_epochs():
    spec = LossSpec("strong", "primal", cm.smoothed(0.5))
    _, record = train(init(SMALL, 0), spec, small_config(epochs=7, log_every=3))
    assert [entry["epoch"] for entry in record.history] == [0, 3, 6]
    assert record.history[0]["dual_loss"] is None
    assert {"upper_bound", "lower_bound", "gap"} <= set(record.history[0])


def test_deterministic_runs_repeat_exactly():
    spec = LossSpec("strong", "dual", cm.smoothed(0.5))
    config = small_config(epochs=4, deterministic=True)
    a, _ = train(init(SMALL, 3), spec, config)
    b, _ = train(init(SMALL, 3), spec, config)
    torch.use_deterministic_algorithms(False)
    assert torch.equal(a.params, b.params)


def test_weak_form_training_with_spectral_basis():
    spec = LossSpec("weak", "primal", cm.piecewise(), basis=build_spectral(2, 2))
    net, record = train(init(SMALL, 0), spec, small_config(grid_n=16), method="vspinn")
    assert record.method == "vspinn"
    assert record.gram["primal"]["form"] == "diagonal"
    assert not torch.equal(net.params, init(SMALL, 0).params)


def test_untrained_side_gives_reuss_lower_bound():
    spec = LossSpec("weak", "primal", cm.piecewise(), basis=build_spectral(1, 1))
    _, record = train(init(SMALL, 0), spec, small_config())
    assert record.final["lower_bound"] == pytest.approx(1.0 / 3.25, rel=1e-12)
    assert record.metadata["trained_sides"] == ["primal"]


def test_non_finite_loss_aborts_with_last_good_parameters(monkeypatch):
    def broken_loss(net, material, loading, grid, sample=None):
        return net.params.sum() * float("nan")

    monkeypatch.setattr(training, "strong_primal_loss", broken_loss)
    start = init(SMALL, 0)
    with pytest.raises(TrainingAborted) as excinfo:
        train(start, LossSpec("strong", "primal", cm.smoothed(0.5)), small_config())
    aborted = excinfo.value
    assert aborted.record.status == "aborted"
    assert torch.equal(aborted.last_good_params["primal"].params, start.params)


def test_checkpoints_are_written(tmp_path):
    spec = LossSpec("strong", "primal", cm.smoothed(0.5))
    train(init(SMALL, 0), spec, small_config(epochs=4, checkpoint_every=2), out_dir=tmp_path)
    assert (tmp_path / "params_primal_2.bin").exists()
    assert (tmp_path / "params_primal_4.bin").exists()


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
