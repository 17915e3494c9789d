"""
FEM Tests

Mesh construction, assembly, the pinned CG solve against a dense oracle, and the
bracketing of the exact value by the P1 bounds under refinement.

Usage:
    python3 tests/test_fem.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from src import cell_material as cm
from src.errors import FemSolveError
from src.fem import (
    assemble_dual,
    assemble_primal,
    build_mesh,
    fem_bounds,
    run_benchmark,
    solve,
    solve_dense,
    system_energy,
)

XI = (1.0, 0.0)
EXACT = cm.obnosov_effective(cm.PhasePair(1.0, 0.1))


def test_mesh_layout():
    mesh = build_mesh(8, cm.piecewise())
    assert mesh.n_triangles == 128
    assert mesh.n_dofs == 64
    assert mesh.n_nodes == 81
    assert mesh.n_triangles * mesh.triangle_area == pytest.approx(4 * math.pi ** 2)
    assert int(np.sum(mesh.gamma == 0.1)) == 32
    assert mesh.triangles[0].tolist() == [0, 8, 9]
    assert mesh.triangles[1].tolist() == [0, 9, 1]


def test_mesh_wraps_periodically():
    mesh = build_mesh(4, cm.piecewise())
    last_cell_t1 = mesh.triangles[2 * 15]
    assert last_cell_t1.tolist() == [15, 3, 0]


@pytest.mark.parametrize("n", [0, 6, 10])
def test_mesh_must_align_with_inclusion(n):
    with pytest.raises(ValueError):
        build_mesh(n, cm.piecewise())


def test_homogeneous_cell():
    mesh = build_mesh(8, cm.piecewise(2.0, 2.0))
    primal, dual = assemble_primal(mesh, XI), assemble_dual(mesh, XI)
    assert np.all(primal.rhs == 0.0)
    np.testing.assert_allclose(primal.stiffness @ np.ones(64), 0.0, atol=1e-12)
    np.testing.assert_allclose(dual.stiffness.toarray(), primal.stiffness.toarray() / 4.0, atol=1e-14)

    u, w = solve(primal), solve(dual)
    assert np.all(u == 0.0) and np.all(w == 0.0)
    report = fem_bounds(mesh, u, w, XI, XI)
    assert report.upper_bound == pytest.approx(2.0, rel=1e-14)
    assert report.lower_bound == pytest.approx(2.0, rel=1e-14)


@pytest.mark.parametrize("assemble", [assemble_primal, assemble_dual])
def test_cg_matches_dense_solve(assemble):
    mesh = build_mesh(8, cm.piecewise())
    system = assemble(mesh, XI)
    cg_solution = solve(system, rtol=1e-13)
    assert np.max(np.abs(cg_solution - solve_dense(system))) <= 1e-10
    assert abs(cg_solution.mean()) < 1e-14


def test_pinned_dof_does_not_matter():
    mesh = build_mesh(8, cm.piecewise())
    system = assemble_primal(mesh, XI)
    assert np.max(np.abs(solve(system, pin=0, rtol=1e-13) - solve(system, pin=7, rtol=1e-13))) <= 1e-9
    with pytest.raises(ValueError):
        solve(system, pin=64)


def test_energy_identity_holds_for_any_vector():
    mesh = build_mesh(8, cm.piecewise())
    system = assemble_primal(mesh, XI)
    u = np.random.default_rng(0).normal(size=system.n_dofs)
    report = fem_bounds(mesh, u, np.zeros(system.n_dofs), XI, XI)
    assert system_energy(system, u) == pytest.approx(report.upper_bound, rel=1e-12)
    with pytest.raises(ValueError):
        system_energy(system, u[:-1])


def test_bounds_bracket_exact_and_tighten():
    gaps = []
    for n in (8, 16, 32):
        result = run_benchmark(n, cm.piecewise())
        report = result.report
        assert report.lower_bound <= EXACT <= report.upper_bound
        gaps.append(report.upper_bound - report.lower_bound)
    assert gaps[0] >= gaps[1] >= gaps[2]


def test_zero_fields_give_voigt_and_reuss():
    mesh = build_mesh(8, cm.piecewise())
    zero = np.zeros(mesh.n_dofs)
    report = fem_bounds(mesh, zero, zero, XI, XI)
    assert report.upper_bound == pytest.approx(0.775, abs=1e-12)
    assert report.lower_bound == pytest.approx(1.0 / 3.25, abs=1e-12)


def test_non_convergence_raises_with_history():
    mesh = build_mesh(16, cm.piecewise())
    with pytest.raises(FemSolveError) as excinfo:
        solve(assemble_primal(mesh, XI), max_iter=1)
    assert len(excinfo.value.residual_history) >= 1


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
