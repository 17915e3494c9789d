"""
FEM - P1 finite elements on a structured periodic triangular mesh

Cell (i, j) of the n × n grid has corners a = (i, j), b = (i+1, j), c = (i+1, j+1),
d = (i, j+1) and is split along the a-c diagonal into T1 = (a, b, c) and T2 = (a, c, d).
Node (i, j) maps to the periodic DoF (i mod n)·n + (j mod n), the same numbering as the
collocation grid with the same n.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg

from src import cell_material as cm
from src.bounds import BoundReport, p1_bounds
from src.errors import FemSolveError
from src.quadrature import CollocationGrid

logger = logging.getLogger(__name__)

DEFAULT_RTOL = 1e-10
DEFAULT_MAX_ITER = 20000


@dataclass
class TriMesh:
    """
    Structured periodic mesh with per-triangle material

    Attributes:
        n: divisions per side
        material: field sampled at triangle centroids
        grad_x, grad_y: sparse (n_triangles, n_dofs) maps from DoF values to the
            constant per-triangle partial derivatives
        tensors, inverse_tensors: (n_triangles, 2, 2) material tensor and its inverse
    """

    n: int
    material: cm.MaterialField
    triangles: np.ndarray
    centroids: np.ndarray
    grad_x: sp.csr_matrix
    grad_y: sp.csr_matrix
    tensors: np.ndarray
    inverse_tensors: np.ndarray

    @property
    def h(self) -> float:
        return cm.TWO_PI / self.n

    @property
    def n_dofs(self) -> int:
        return self.n * self.n

    @property
    def n_nodes(self) -> int:
        """Geometric nodes including the periodic copies on the far edges"""
        return (self.n + 1) ** 2

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def triangle_area(self) -> float:
        return 0.5 * self.h * self.h

    @cached_property
    def dof_points(self) -> np.ndarray:
        return CollocationGrid(self.n).points

    @cached_property
    def gamma(self) -> np.ndarray:
        """Per-triangle scalar conductivity"""
        return self.tensors[:, 0, 0].copy()


def _check_alignment(n: int):
    if n < 4 or n % 4 != 0:
        raise ValueError(
            f"Mesh size n={n} does not align with the inclusion boundary at π/2 and 3π/2; "
            "use n >= 4 divisible by 4"
        )


def build_mesh(n: int, material: cm.MaterialField) -> TriMesh:
    """
    Build the mesh and sample the material at triangle centroids

    Args:
        n: divisions per side, a multiple of 4 so no triangle straddles an interface
        material: conductivity field (piecewise for guaranteed bounds)
    """
    n = int(n)
    _check_alignment(n)
    h = cm.TWO_PI / n

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    i, j = i.ravel(), j.ravel()

    def dof(ii, jj):
        return (ii % n) * n + (jj % n)

    a, b, c, d = dof(i, j), dof(i + 1, j), dof(i + 1, j + 1), dof(i, j + 1)
    n_cells = n * n
    t1 = 2 * np.arange(n_cells)
    t2 = t1 + 1

    triangles = np.empty((2 * n_cells, 3), dtype=np.int64)
    triangles[t1] = np.stack([a, b, c], axis=-1)
    triangles[t2] = np.stack([a, c, d], axis=-1)

    centroids = np.empty((2 * n_cells, 2))
    centroids[t1] = np.stack([(i + 2.0 / 3.0) * h, (j + 1.0 / 3.0) * h], axis=-1)
    centroids[t2] = np.stack([(i + 1.0 / 3.0) * h, (j + 2.0 / 3.0) * h], axis=-1)

    # T1: ∂₁ = (u_b − u_a)/h, ∂₂ = (u_c − u_b)/h;  T2: ∂₁ = (u_c − u_d)/h, ∂₂ = (u_d − u_a)/h
    inv_h = 1.0 / h
    ones = np.full(n_cells, inv_h)
    rows = np.concatenate([t1, t1, t2, t2])
    shape = (2 * n_cells, n_cells)
    grad_x = sp.coo_matrix(
        (np.concatenate([ones, -ones, ones, -ones]), (rows, np.concatenate([b, a, c, d]))), shape=shape
    ).tocsr()
    grad_y = sp.coo_matrix(
        (np.concatenate([ones, -ones, ones, -ones]), (rows, np.concatenate([c, b, d, a]))), shape=shape
    ).tocsr()

    mesh = TriMesh(
        n=n,
        material=material,
        triangles=triangles,
        centroids=centroids,
        grad_x=grad_x,
        grad_y=grad_y,
        tensors=cm.conductivity(material, centroids),
        inverse_tensors=cm.resistivity(material, centroids),
    )
    logger.debug(f"Built {n}x{n} mesh: {mesh.n_triangles} triangles, {mesh.n_dofs} DoFs, {material.label()}")
    return mesh


@dataclass
class SparseSystem:
    """
    Stiffness K, right-hand side b and the loading-only energy term

    The discrete energy of a trial vector u is (c − 2uᵀb + uᵀKu)/|X|.
    """

    side: str
    stiffness: sp.csr_matrix
    rhs: np.ndarray
    constant_energy: float
    mesh_n: int

    @property
    def n_dofs(self) -> int:
        return self.rhs.shape[0]


def _assemble(mesh: TriMesh, coefficients: np.ndarray, load: np.ndarray):
    """Σ_T |T|·GᵀCG and −Σ_T |T|·Gᵀ·load for per-triangle C (T, 2, 2) and load (T, 2)"""
    area = mesh.triangle_area
    ops = (mesh.grad_x, mesh.grad_y)
    stiffness = None
    for r in range(2):
        for s in range(2):
            weight = sp.diags(area * coefficients[:, r, s])
            term = ops[r].T @ weight @ ops[s]
            stiffness = term if stiffness is None else stiffness + term
    rhs = -(ops[0].T @ (area * load[:, 0]) + ops[1].T @ (area * load[:, 1]))
    return sp.csr_matrix(stiffness), np.asarray(rhs, dtype=np.float64)


def assemble_primal(mesh: TriMesh, xi) -> SparseSystem:
    """K = Σ|T|·∇φᵀA_T∇φ, b = −Σ|T|·∇φᵀA_Tξ"""
    xi = np.asarray(xi, dtype=np.float64)
    load = np.einsum("tij,j->ti", mesh.tensors, xi)
    stiffness, rhs = _assemble(mesh, mesh.tensors, load)
    constant = float(mesh.triangle_area * np.einsum("i,ti->", xi, load))
    logger.debug(f"Assembled primal system: {stiffness.nnz} non-zeros")
    return SparseSystem("primal", stiffness, rhs, constant, mesh.n)


def assemble_dual(mesh: TriMesh, zeta) -> SparseSystem:
    """Stiffness with QᵀA_T⁻¹Q in place of A_T; rhs from −(Q∇φ)ᵀA_T⁻¹ζ"""
    zeta = np.asarray(zeta, dtype=np.float64)
    q = np.array([[0.0, -1.0], [1.0, 0.0]])
    coefficients = np.einsum("ki,tkl,lj->tij", q, mesh.inverse_tensors, q)
    flux = np.einsum("tij,j->ti", mesh.inverse_tensors, zeta)
    load = np.einsum("ki,tk->ti", q, flux)
    stiffness, rhs = _assemble(mesh, coefficients, load)
    constant = float(mesh.triangle_area * np.einsum("i,ti->", zeta, flux))
    logger.debug(f"Assembled dual system: {stiffness.nnz} non-zeros")
    return SparseSystem("dual", stiffness, rhs, constant, mesh.n)


def _reduce(system: SparseSystem, pin: int):
    if not 0 <= pin < system.n_dofs:
        raise ValueError(f"Pinned DoF {pin} outside 0..{system.n_dofs - 1}")
    keep = np.delete(np.arange(system.n_dofs), pin)
    return keep, system.stiffness[keep][:, keep].tocsr(), system.rhs[keep]


def _expand(system: SparseSystem, keep: np.ndarray, reduced: np.ndarray) -> np.ndarray:
    full = np.zeros(system.n_dofs)
    full[keep] = reduced
    return full - full.mean()


def solve(system: SparseSystem, pin: int = 0, rtol: float = DEFAULT_RTOL,
          max_iter: Optional[int] = None) -> np.ndarray:
    """
    Jacobi-preconditioned CG on the pinned system, returned with zero mean

    Raises:
        FemSolveError: when CG does not reach rtol within max_iter iterations
    """
    max_iter = int(max_iter or DEFAULT_MAX_ITER)
    keep, stiffness, rhs = _reduce(system, pin)
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        logger.debug(f"{system.side} right-hand side vanishes; zero fluctuation")
        return np.zeros(system.n_dofs)

    diagonal = stiffness.diagonal()
    preconditioner = LinearOperator(stiffness.shape, matvec=lambda v: v / diagonal, dtype=np.float64)
    history: List[float] = []

    def record(xk):
        history.append(float(np.linalg.norm(rhs - stiffness @ xk)) / rhs_norm)

    reduced, info = cg(stiffness, rhs, rtol=rtol, atol=0.0, maxiter=max_iter, M=preconditioner, callback=record)
    final = float(np.linalg.norm(rhs - stiffness @ reduced)) / rhs_norm
    if info != 0 or not np.isfinite(final):
        raise FemSolveError(
            f"CG on the {system.side} system did not converge: relative residual {final:.3e} after "
            f"{len(history)} iterations (rtol {rtol:g})",
            history,
        )
    if len(history) > 0.9 * max_iter:
        logger.warning(f"⚠️ {system.side} CG needed {len(history)} of {max_iter} iterations")
    logger.debug(f"{system.side} CG converged in {len(history)} iterations (residual {final:.3e})")
    return _expand(system, keep, reduced)


def solve_dense(system: SparseSystem, pin: int = 0) -> np.ndarray:
    """Direct dense solve of the pinned system; reference for small meshes"""
    keep, stiffness, rhs = _reduce(system, pin)
    return _expand(system, keep, np.linalg.solve(stiffness.toarray(), rhs))


def system_energy(system: SparseSystem, solution: np.ndarray) -> float:
    """(1/|X|)·(c − 2uᵀb + uᵀKu), equal to c − uᵀb at the Galerkin solution"""
    u = np.asarray(solution, dtype=np.float64)
    if u.shape != (system.n_dofs,):
        raise ValueError(f"Expected {system.n_dofs} DoF values, got shape {u.shape}")
    energy = system.constant_energy - 2.0 * float(u @ system.rhs) + float(u @ (system.stiffness @ u))
    return energy / cm.UNIT_CELL.area


def fem_bounds(mesh: TriMesh, primal_solution: np.ndarray, dual_solution: np.ndarray, xi, zeta) -> BoundReport:
    """Upper bound from the primal energy, lower bound 1/B₁₁ from the dual energy"""
    return p1_bounds(mesh, primal_solution, dual_solution, xi, zeta)


@dataclass
class FemResult:
    """Both solves on one mesh plus their bounds"""

    mesh: TriMesh
    primal: np.ndarray
    dual: np.ndarray
    report: BoundReport


def run_benchmark(n: int, material: cm.MaterialField, loading=(1.0, 0.0), rtol: float = DEFAULT_RTOL,
                  max_iter: Optional[int] = None) -> FemResult:
    """Build, assemble, solve both forms and bound on one mesh"""
    mesh = build_mesh(n, material)
    primal = solve(assemble_primal(mesh, loading), rtol=rtol, max_iter=max_iter)
    dual = solve(assemble_dual(mesh, loading), rtol=rtol, max_iter=max_iter)
    report = fem_bounds(mesh, primal, dual, loading, loading)
    logger.info(f"✅ FEM n={n}: upper {report.upper_bound:.6f}, lower {report.lower_bound:.6f}")
    return FemResult(mesh, primal, dual, report)
