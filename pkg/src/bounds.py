"""
Bounds - Quick quadrature estimates and guaranteed bounds of the effective conductivity

Quick estimates evaluate the primal/dual energies at collocation points and carry no
ordering guarantee. Guaranteed bounds integrate the energies exactly for P1 fields on
a phase-aligned triangular mesh:
    lower = 1/(ζᵀB_hζ)  ≤  A*  ≤  ξᵀA_hξ = upper
"""

from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Dict, Optional

import numpy as np
import torch

from src import cell_material as cm
from src.losses import MaterialSample, _loading, rotate, sample_material
from src.network import PeriodicNet, forward, values
from src.quadrature import CollocationGrid, cell_average

if TYPE_CHECKING:
    from src.fem import TriMesh

ORDER_SLACK = 1e-12


@dataclass
class BoundReport:
    """Quick estimates, guaranteed bounds and the primal-dual gap"""

    primal_estimate: float
    dual_estimate: float
    upper_bound: float
    lower_bound: float

    def __post_init__(self):
        if self.lower_bound > self.upper_bound + ORDER_SLACK * max(1.0, abs(self.upper_bound)):
            raise ValueError(f"Bound ordering violated: lower {self.lower_bound} > upper {self.upper_bound}")

    @property
    def gap(self) -> float:
        """(primal − dual)/primal of the quick estimates"""
        return (self.primal_estimate - self.dual_estimate) / self.primal_estimate

    def relative_errors(self, exact: float) -> Dict[str, float]:
        """Signed relative errors in percent"""
        return {
            name: 100.0 * (value - exact) / exact
            for name, value in (
                ("primal_estimate", self.primal_estimate),
                ("dual_estimate", self.dual_estimate),
                ("upper_bound", self.upper_bound),
                ("lower_bound", self.lower_bound),
            )
        }

    def to_dict(self, exact: Optional[float] = None) -> Dict:
        data = asdict(self)
        data["gap"] = self.gap
        if exact is not None:
            data["exact_reference"] = exact
            data["relative_errors"] = self.relative_errors(exact)
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "BoundReport":
        return cls(
            primal_estimate=float(data["primal_estimate"]),
            dual_estimate=float(data["dual_estimate"]),
            upper_bound=float(data["upper_bound"]),
            lower_bound=float(data["lower_bound"]),
        )


# -- quick estimates ------------------------------------------------------------------

def primal_energy_density(grad_u: torch.Tensor, sample: MaterialSample, xi: torch.Tensor) -> torch.Tensor:
    e = xi + grad_u
    return torch.einsum("pi,pij,pj->p", e, sample.tensor, e)


def dual_energy_density(grad_w: torch.Tensor, sample: MaterialSample, zeta: torch.Tensor) -> torch.Tensor:
    f = zeta + rotate(grad_w)
    return torch.einsum("pi,pij,pj->p", f, sample.inverse, f)


def quick_estimate_primal(net: PeriodicNet, material: cm.MaterialField, xi, grid: CollocationGrid,
                          sample: Optional[MaterialSample] = None) -> float:
    """(1/|X|)·∫ (ξ + ∇ũ)ᵀA(ξ + ∇ũ) dx at the grid nodes"""
    sample = sample or sample_material(material, grid.points)
    with torch.no_grad():
        grad_u = forward(net, grid.tensor).grad
        return float(cell_average(primal_energy_density(grad_u, sample, _loading(xi)), grid))


def quick_estimate_dual(net_w: PeriodicNet, material: cm.MaterialField, zeta, grid: CollocationGrid,
                        sample: Optional[MaterialSample] = None) -> float:
    """1/B with B = (1/|X|)·∫ (ζ + Q∇w̃)ᵀA⁻¹(ζ + Q∇w̃) dx at the grid nodes"""
    sample = sample or sample_material(material, grid.points)
    with torch.no_grad():
        grad_w = forward(net_w, grid.tensor).grad
        energy = float(cell_average(dual_energy_density(grad_w, sample, _loading(zeta)), grid))
    return 1.0 / energy


# -- P1 projection and exact integration ----------------------------------------------

def project_to_p1(net: PeriodicNet, mesh: "TriMesh", grid: Optional[CollocationGrid] = None) -> np.ndarray:
    """Nodal interpolation of the network onto the mesh's periodic P1 space"""
    if grid is not None and grid.n != mesh.n:
        raise ValueError(f"Projection nodes need grid n = mesh n, got grid {grid.n}, mesh {mesh.n}")
    return values(net, torch.from_numpy(mesh.dof_points)).numpy().astype(np.float64)


def p1_gradients(mesh: "TriMesh", dofs: np.ndarray) -> np.ndarray:
    """Constant per-triangle gradients (n_tri, 2) of a P1 field"""
    dofs = np.asarray(dofs, dtype=np.float64)
    if dofs.shape != (mesh.n_dofs,):
        raise ValueError(f"Expected {mesh.n_dofs} DoF values, got shape {dofs.shape}")
    return np.stack([mesh.grad_x @ dofs, mesh.grad_y @ dofs], axis=-1)


def p1_primal_energy(mesh: "TriMesh", dofs: np.ndarray, xi) -> float:
    e = np.asarray(xi, dtype=np.float64) + p1_gradients(mesh, dofs)
    return float(np.einsum("ti,tij,tj->", e, mesh.tensors, e) * mesh.triangle_area / cm.UNIT_CELL.area)


def p1_dual_energy(mesh: "TriMesh", dofs: np.ndarray, zeta) -> float:
    g = p1_gradients(mesh, dofs)
    f = np.asarray(zeta, dtype=np.float64) + np.stack([-g[:, 1], g[:, 0]], axis=-1)
    return float(np.einsum("ti,tij,tj->", f, mesh.inverse_tensors, f) * mesh.triangle_area / cm.UNIT_CELL.area)


def p1_bounds(mesh: "TriMesh", primal_dofs: np.ndarray, dual_dofs: np.ndarray, xi, zeta) -> BoundReport:
    """Exact per-triangle energies; the estimates equal the bounds"""
    upper = p1_primal_energy(mesh, primal_dofs, xi)
    lower = 1.0 / p1_dual_energy(mesh, dual_dofs, zeta)
    return BoundReport(primal_estimate=upper, dual_estimate=lower, upper_bound=upper, lower_bound=lower)


def guaranteed_bounds(projected_primal: np.ndarray, projected_dual: np.ndarray, mesh: "TriMesh", xi, zeta,
                      quick_primal: Optional[float] = None, quick_dual: Optional[float] = None) -> BoundReport:
    """
    Guaranteed bounds of the ORIGINAL piecewise problem from projected trial fields

    Args:
        projected_primal, projected_dual: P1 DoF vectors (e.g. from project_to_p1)
        mesh: mesh carrying the piecewise material
        xi, zeta: unit macroscopic loadings
        quick_primal, quick_dual: quick estimates to report alongside (default: the bounds)
    """
    if mesh.material.kind != cm.PIECEWISE:
        raise cm.MaterialError("Guaranteed bounds refer to the piecewise material; rebuild the mesh with it")
    report = p1_bounds(mesh, projected_primal, projected_dual, xi, zeta)
    if quick_primal is not None:
        report.primal_estimate = float(quick_primal)
    if quick_dual is not None:
        report.dual_estimate = float(quick_dual)
    return report
