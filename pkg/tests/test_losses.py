"""
Loss Tests

Strong residuals on known fields, the weak/strong integration-by-parts identity,
and the Gram-weighted loss.

Usage:
    python3 tests/test_losses.py
"""

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest
import torch

from src import cell_material as cm
from src.autodiff import DTYPE, param_gradient
from src.errors import MaterialError
from src.losses import (
    gram_weighted_loss,
    phasewise_residual,
    rotate,
    sample_material,
    strong_dual_loss,
    strong_dual_residual,
    strong_primal_loss,
    strong_primal_residual,
    weak_residual_dual,
    weak_residual_primal,
)
from src.network import NetworkConfig, init, zeros
from src.quadrature import CollocationGrid, integrate
from src.weak_bases import Gram, build_spectral, spectral_gram

SMALL = NetworkConfig(4, 4, 1)
XI = (1.0, 0.0)


def test_rotation():
    v = torch.tensor([[2.0, 3.0]], dtype=DTYPE)
    assert rotate(v).tolist() == [[-3.0, 2.0]]


def test_homogeneous_cell_has_zero_residual_for_zero_field():
    material = cm.smoothed(0.1, 1.0, 1.0)
    grid = CollocationGrid(8)
    net = zeros(SMALL)
    assert float(strong_primal_loss(net, material, XI, grid)) == 0.0
    assert float(strong_dual_loss(net, material, XI, grid)) == 0.0
    r = weak_residual_primal(net, material, XI, build_spectral(2, 2), grid)
    assert float(r.abs().max()) < 1e-12


def test_strong_form_rejects_piecewise_material():
    grid = CollocationGrid(4)
    with pytest.raises(MaterialError):
        strong_primal_loss(zeros(SMALL), cm.piecewise(), XI, grid)
    with pytest.raises(MaterialError):
        strong_dual_residual(zeros(SMALL), cm.piecewise(), XI, grid.tensor)


def test_zero_field_residuals_follow_the_conductivity_gradient():
    material = cm.smoothed(0.3)
    x = torch.rand(10, 2, dtype=DTYPE) * cm.TWO_PI
    sample = sample_material(material, x)
    primal = strong_primal_residual(zeros(SMALL), material, XI, x)
    dual = strong_dual_residual(zeros(SMALL), material, XI, x)
    assert torch.allclose(primal, sample.grad_gamma[:, 0], atol=1e-14)
    assert torch.allclose(dual, sample.grad_gamma[:, 1] / sample.gamma ** 2, atol=1e-14)


def test_loading_must_be_a_2_vector():
    with pytest.raises(ValueError):
        strong_primal_residual(zeros(SMALL), cm.smoothed(0.1), (1.0, 0.0, 0.0), torch.zeros(1, 2, dtype=DTYPE))


@pytest.mark.parametrize("side", ["primal", "dual"])
def test_weak_residual_is_minus_integral_of_strong_residual(side):
    material = cm.smoothed(1.0)
    grid = CollocationGrid(64)
    basis = build_spectral(2, 2)
    net = init(SMALL, 5)
    phi = basis.values(grid.tensor)
    with torch.no_grad():
        if side == "primal":
            weak = weak_residual_primal(net, material, XI, basis, grid)
            strong = strong_primal_residual(net, material, XI, grid.tensor)
        else:
            weak = weak_residual_dual(net, material, XI, basis, grid)
            strong = strong_dual_residual(net, material, XI, grid.tensor)
    expected = -integrate(phi * strong, grid)
    assert float((weak - expected).abs().max()) < 1e-8 * max(1.0, float(expected.abs().max()))


def test_weak_residual_accepts_piecewise_material():
    grid = CollocationGrid(16)
    r = weak_residual_primal(init(SMALL, 0), cm.piecewise(), XI, build_spectral(2, 2), grid)
    assert r.shape == (16,)
    assert bool(torch.all(torch.isfinite(r)))


def test_phasewise_residual_on_piecewise_material():
    grid = CollocationGrid(8)
    residual = phasewise_residual(zeros(SMALL), cm.piecewise(), XI, grid, "dual")
    assert isinstance(residual, np.ndarray)
    assert residual.shape == (64,)
    assert np.all(residual == 0.0)


def test_gram_weighted_loss():
    r = torch.tensor([1.0, 2.0], dtype=DTYPE)
    diagonal = Gram("diagonal", diagonal=torch.tensor([1.0, 4.0], dtype=DTYPE))
    full = Gram("full", matrix=torch.diag(torch.tensor([2.0, 8.0], dtype=DTYPE)))
    assert float(gram_weighted_loss(r, diagonal)) == pytest.approx(2.0)
    assert float(gram_weighted_loss(r, full)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        gram_weighted_loss(torch.ones(3, dtype=DTYPE), diagonal)


def _loss_of(kind, net, grid, basis):
    material = cm.smoothed(0.5)
    if kind == "strong_primal":
        return strong_primal_loss(net, material, XI, grid)
    if kind == "strong_dual":
        return strong_dual_loss(net, material, XI, grid)
    residual = weak_residual_primal if kind == "weak_primal" else weak_residual_dual
    return gram_weighted_loss(residual(net, material, XI, basis, grid), spectral_gram(basis))


@pytest.mark.parametrize("kind", ["strong_primal", "strong_dual", "weak_primal", "weak_dual"])
def test_parameter_gradient_matches_central_differences(kind):
    grid = CollocationGrid(8)
    basis = build_spectral(2, 2)
    net = init(SMALL, 9)

    def loss_fn(theta):
        return _loss_of(kind, net.with_params(theta), grid, basis)

    grad = param_gradient(loss_fn, net.params)
    with torch.no_grad():
        scale = max(1.0, abs(float(loss_fn(net.params))))
    h = 1e-6
    for k in range(net.size):
        step = torch.zeros(net.size, dtype=DTYPE)
        step[k] = h
        with torch.no_grad():
            fd = (float(loss_fn(net.params + step)) - float(loss_fn(net.params - step))) / (2 * h)
        assert abs(float(grad[k]) - fd) <= 1e-4 * abs(fd) + 1e-8 * scale, f"parameter {k}"


def test_homogeneous_dual_weak_residual_is_scaled_primal():
    c = 2.5
    material = cm.piecewise(c, c)
    grid = CollocationGrid(16)
    basis = build_spectral(2, 2)
    net = init(SMALL, 6)
    zeta = (1.0, 0.0)
    with torch.no_grad():
        dual = weak_residual_dual(net, material, zeta, basis, grid)
        # primal loading Qᵀζ
        primal = weak_residual_primal(net, material, (zeta[1], -zeta[0]), basis, grid)
    assert float(primal.abs().max()) > 1e-6
    assert torch.allclose(dual, primal / c ** 2, rtol=1e-12, atol=1e-12)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
