"""
Losses - Strong-form residuals and weak-form residual vectors for the primal and dual
cell problems

Primal unknown: temperature fluctuation ũ under a macroscopic gradient ξ.
Dual unknown: stream function w̃ of the flux fluctuation under a macroscopic flux ζ,
with rotated gradient Q∇w̃ = (−∂₂w̃, ∂₁w̃).
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch

from src import cell_material as cm
from src.autodiff import DTYPE, Jet2
from src.errors import MaterialError
from src.network import PeriodicNet, forward
from src.quadrature import CollocationGrid, cell_average, integrate
from src.weak_bases import Gram

# 90° rotation; the opposite sign only flips w̃
Q = torch.tensor([[0.0, -1.0], [1.0, 0.0]], dtype=DTYPE)


@dataclass
class MaterialSample:
    """Material data sampled at a fixed set of points"""

    gamma: torch.Tensor                      # (P,)
    tensor: torch.Tensor                     # (P, 2, 2)
    inverse: torch.Tensor                    # (P, 2, 2)
    grad_gamma: Optional[torch.Tensor] = None  # (P, 2), smoothed fields only


def sample_material(material: cm.MaterialField, x) -> MaterialSample:
    x = np.asarray(x.detach().cpu().numpy() if isinstance(x, torch.Tensor) else x, dtype=np.float64)
    grad = None
    if material.is_smooth:
        grad = torch.from_numpy(cm.conductivity_gradient(material, x))
    return MaterialSample(
        gamma=torch.from_numpy(np.asarray(cm.conductivity_scalar(material, x), dtype=np.float64)),
        tensor=torch.from_numpy(cm.conductivity(material, x)),
        inverse=torch.from_numpy(cm.resistivity(material, x)),
        grad_gamma=grad,
    )


def rotate(v: torch.Tensor) -> torch.Tensor:
    """Q·v on the trailing axis"""
    return torch.stack([-v[..., 1], v[..., 0]], dim=-1)


def _loading(vector) -> torch.Tensor:
    vector = torch.as_tensor(vector, dtype=DTYPE)
    if vector.shape != (2,):
        raise ValueError(f"Macroscopic loading must be a 2-vector, got shape {tuple(vector.shape)}")
    return vector


def _require_smooth(material: cm.MaterialField):
    if not material.is_smooth:
        raise MaterialError(
            "Strong-form residuals need a smoothed material; on the piecewise field the "
            "network collapses to a near-constant solution. Use a weak-form method instead."
        )


# -- strong form ----------------------------------------------------------------------

def primal_residual_from_jet(jet: Jet2, sample: MaterialSample, xi: torch.Tensor) -> torch.Tensor:
    """∇·[γ(ξ + ∇ũ)] = ∇γ·(ξ + ∇ũ) + γ·Δũ"""
    grad_gamma = sample.grad_gamma if sample.grad_gamma is not None else torch.zeros_like(jet.grad)
    e = xi + jet.grad
    return (grad_gamma * e).sum(dim=-1) + sample.gamma * jet.laplacian


def dual_residual_from_jet(jet: Jet2, sample: MaterialSample, zeta: torch.Tensor) -> torch.Tensor:
    """
    ∂₁f₂ − ∂₂f₁ with f = ρ(ζ + Q∇w̃), ρ = 1/γ:
        ∂₁ρ·(ζ₂ + ∂₁w̃) − ∂₂ρ·(ζ₁ − ∂₂w̃) + ρ·Δw̃
    """
    rho = 1.0 / sample.gamma
    if sample.grad_gamma is not None:
        grad_rho = -sample.grad_gamma * (rho * rho).unsqueeze(-1)
    else:
        grad_rho = torch.zeros_like(jet.grad)
    w1, w2 = jet.grad[..., 0], jet.grad[..., 1]
    return grad_rho[..., 0] * (zeta[1] + w1) - grad_rho[..., 1] * (zeta[0] - w2) + rho * jet.laplacian


def strong_primal_residual(net: PeriodicNet, material: cm.MaterialField, xi, x) -> torch.Tensor:
    _require_smooth(material)
    x = torch.as_tensor(x, dtype=DTYPE)
    return primal_residual_from_jet(forward(net, x), sample_material(material, x), _loading(xi))


def strong_dual_residual(net_w: PeriodicNet, material: cm.MaterialField, zeta, x) -> torch.Tensor:
    _require_smooth(material)
    x = torch.as_tensor(x, dtype=DTYPE)
    return dual_residual_from_jet(forward(net_w, x), sample_material(material, x), _loading(zeta))


def strong_primal_loss(net: PeriodicNet, material: cm.MaterialField, xi, grid: CollocationGrid,
                       sample: Optional[MaterialSample] = None) -> torch.Tensor:
    """(1/|X|)·∫ residual² dx"""
    _require_smooth(material)
    sample = sample or sample_material(material, grid.points)
    residual = primal_residual_from_jet(forward(net, grid.tensor), sample, _loading(xi))
    return cell_average(residual * residual, grid)


def strong_dual_loss(net_w: PeriodicNet, material: cm.MaterialField, zeta, grid: CollocationGrid,
                     sample: Optional[MaterialSample] = None) -> torch.Tensor:
    _require_smooth(material)
    sample = sample or sample_material(material, grid.points)
    residual = dual_residual_from_jet(forward(net_w, grid.tensor), sample, _loading(zeta))
    return cell_average(residual * residual, grid)


def phasewise_residual(net: PeriodicNet, material: cm.MaterialField, loading, grid: CollocationGrid,
                       side: str = "primal") -> np.ndarray:
    """
    Pointwise strong residual for inspection; on the piecewise field ∇γ is taken as zero
    (exact away from the interfaces)
    """
    sample = sample_material(material, grid.points)
    with torch.no_grad():
        jet = forward(net, grid.tensor)
        if side == "primal":
            residual = primal_residual_from_jet(jet, sample, _loading(loading))
        else:
            residual = dual_residual_from_jet(jet, sample, _loading(loading))
    return residual.numpy()


# -- weak form ------------------------------------------------------------------------

def _check_table(table: torch.Tensor, grid: CollocationGrid):
    if table.ndim != 3 or table.shape[1] != grid.size:
        raise ValueError(f"Basis table covers {table.shape[1]} points, grid has {grid.size}")


def primal_weak_from_grad(grad_u: torch.Tensor, sample: MaterialSample, xi: torch.Tensor,
                          table: torch.Tensor, grid: CollocationGrid) -> torch.Tensor:
    flux = torch.einsum("pij,pj->pi", sample.tensor, xi + grad_u)
    return integrate(torch.einsum("npd,pd->np", table, flux), grid)


def dual_weak_from_grad(grad_w: torch.Tensor, sample: MaterialSample, zeta: torch.Tensor,
                        table: torch.Tensor, grid: CollocationGrid) -> torch.Tensor:
    field = torch.einsum("pij,pj->pi", sample.inverse, zeta + rotate(grad_w))
    return integrate(torch.einsum("npd,pd->np", rotate(table), field), grid)


def weak_residual_primal(net: PeriodicNet, material: cm.MaterialField, xi, basis,
                         grid: CollocationGrid, sample: Optional[MaterialSample] = None) -> torch.Tensor:
    """r_n = ∫_X ∇φ_nᵀ A (ξ + ∇ũ) dx, one entry per test function"""
    table = basis.gradient_table(grid)
    _check_table(table, grid)
    sample = sample or sample_material(material, grid.points)
    return primal_weak_from_grad(forward(net, grid.tensor).grad, sample, _loading(xi), table, grid)


def weak_residual_dual(net_w: PeriodicNet, material: cm.MaterialField, zeta, basis,
                       grid: CollocationGrid, sample: Optional[MaterialSample] = None) -> torch.Tensor:
    """r_n = ∫_X (Q∇ψ_n)ᵀ A⁻¹ (ζ + Q∇w̃) dx"""
    table = basis.gradient_table(grid)
    _check_table(table, grid)
    sample = sample or sample_material(material, grid.points)
    return dual_weak_from_grad(forward(net_w, grid.tensor).grad, sample, _loading(zeta), table, grid)


def gram_weighted_loss(r: torch.Tensor, gram: Gram) -> torch.Tensor:
    """rᵀ G⁻¹ r"""
    if r.shape[-1] != gram.size:
        raise ValueError(f"Residual has {r.shape[-1]} entries, Gram is {gram.size}x{gram.size}")
    if gram.form == "diagonal":
        return (r * r / gram.diagonal).sum()
    y = torch.cholesky_solve(r.unsqueeze(-1), gram.cholesky()).squeeze(-1)
    return (r * y).sum()
