"""
Bounds Tests

Usage:
    python3 tests/test_bounds.py
"""

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest
import torch

from src import cell_material as cm
from src.bounds import (
    BoundReport,
    guaranteed_bounds,
    p1_gradients,
    project_to_p1,
    quick_estimate_dual,
    quick_estimate_primal,
)
from src.errors import MaterialError
from src.fem import build_mesh, fem_bounds, run_benchmark
from src.network import NetworkConfig, init, zeros
from src.quadrature import CollocationGrid

XI = (1.0, 0.0)
SMALL = NetworkConfig(4, 4, 1)
EXACT = cm.obnosov_effective(cm.PhasePair(1.0, 0.1))


def test_report_ordering_and_gap():
    with pytest.raises(ValueError):
        BoundReport(primal_estimate=1.0, dual_estimate=0.9, upper_bound=1.0, lower_bound=1.1)
    report = BoundReport(primal_estimate=1.0, dual_estimate=0.9, upper_bound=1.0, lower_bound=0.8)
    assert report.gap == pytest.approx(0.1)
    data = report.to_dict(exact=0.5)
    assert data["exact_reference"] == 0.5
    assert data["relative_errors"]["upper_bound"] == pytest.approx(100.0)
    assert BoundReport.from_dict(data) == report
    assert "relative_errors" not in report.to_dict()


def test_quick_estimates_of_homogeneous_cell():
    material = cm.piecewise(2.0, 2.0)
    grid = CollocationGrid(8)
    net = zeros(SMALL)
    assert quick_estimate_primal(net, material, XI, grid) == pytest.approx(2.0, rel=1e-14)
    assert quick_estimate_dual(net, material, XI, grid) == pytest.approx(2.0, rel=1e-14)


def test_quick_estimates_of_zero_field_count_grid_nodes():
    grid = CollocationGrid(128)
    fraction = (63 / 128) ** 2
    net = zeros(SMALL)
    assert quick_estimate_primal(net, cm.piecewise(), XI, grid) == pytest.approx(1.0 - 0.9 * fraction, rel=1e-12)
    assert quick_estimate_dual(net, cm.piecewise(), XI, grid) == pytest.approx(1.0 / (1.0 + 9.0 * fraction), rel=1e-12)


def test_projection_and_p1_gradients():
    mesh = build_mesh(8, cm.piecewise())
    params = zeros(SMALL).params.clone()
    params[-1] = 3.0
    constant = project_to_p1(zeros(SMALL).with_params(params), mesh)
    assert np.all(constant == 3.0)
    assert np.all(p1_gradients(mesh, constant) == 0.0)

    u = project_to_p1(init(SMALL, 4), mesh)
    grads = p1_gradients(mesh, u)
    h = mesh.h
    np.testing.assert_allclose(grads[0], [(u[8] - u[0]) / h, (u[9] - u[8]) / h], rtol=0, atol=1e-12)
    np.testing.assert_allclose(grads[1], [(u[9] - u[1]) / h, (u[1] - u[0]) / h], rtol=0, atol=1e-12)

    with pytest.raises(ValueError):
        project_to_p1(init(SMALL, 4), mesh, CollocationGrid(16))
    with pytest.raises(ValueError):
        p1_gradients(mesh, u[:10])


def test_random_networks_bracket_exact_value():
    mesh = build_mesh(16, cm.piecewise())
    config = NetworkConfig(10, 10, 2)
    for k in range(5):
        u = project_to_p1(init(config, 2 * k), mesh)
        w = project_to_p1(init(config, 2 * k + 1), mesh)
        report = guaranteed_bounds(u, w, mesh, XI, XI)
        assert report.lower_bound <= EXACT <= report.upper_bound


def test_constant_shift_leaves_bounds_unchanged():
    mesh = build_mesh(8, cm.piecewise())
    net = init(SMALL, 1)
    shifted = net.params.clone()
    shifted[-1] += 3.5
    w = project_to_p1(init(SMALL, 2), mesh)
    a = guaranteed_bounds(project_to_p1(net, mesh), w, mesh, XI, XI)
    b = guaranteed_bounds(project_to_p1(net.with_params(shifted), mesh), w, mesh, XI, XI)
    assert abs(a.upper_bound - b.upper_bound) < 1e-10


def test_bounds_need_piecewise_mesh():
    mesh = build_mesh(8, cm.smoothed(0.05))
    zero = np.zeros(mesh.n_dofs)
    with pytest.raises(MaterialError):
        guaranteed_bounds(zero, zero, mesh, XI, XI)


def test_quick_values_are_reported_alongside():
    mesh = build_mesh(8, cm.piecewise())
    zero = np.zeros(mesh.n_dofs)
    report = guaranteed_bounds(zero, zero, mesh, XI, XI, quick_primal=0.7, quick_dual=0.6)
    assert (report.primal_estimate, report.dual_estimate) == (0.7, 0.6)
    assert report.upper_bound == pytest.approx(0.775)


def test_fem_solutions_reproduce_fem_bounds():
    result = run_benchmark(16, cm.piecewise())
    report = guaranteed_bounds(result.primal, result.dual, result.mesh, XI, XI)
    reference = fem_bounds(result.mesh, result.primal, result.dual, XI, XI)
    assert report.upper_bound == reference.upper_bound
    assert report.lower_bound == reference.lower_bound


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
