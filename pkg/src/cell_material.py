"""
Cell Material - Periodic unit cell, two-phase conductivity fields and analytic references

The cell is the square (0, 2π)² with a centrally placed square inclusion occupying
(π/2, 3π/2)². Points on the inclusion boundary belong to the matrix phase.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.errors import MaterialError

TWO_PI = 2.0 * math.pi
INCLUSION_LOW = 0.5 * math.pi
INCLUSION_HIGH = 1.5 * math.pi

PIECEWISE = "piecewise"
SMOOTHED = "smoothed"


@dataclass(frozen=True)
class UnitCell:
    """The 2π × 2π periodic cell"""

    side_length: float = TWO_PI

    @property
    def area(self) -> float:
        return self.side_length ** 2


UNIT_CELL = UnitCell()


@dataclass(frozen=True)
class PhasePair:
    """Matrix and inclusion conductivities"""

    gamma_mat: float = 1.0
    gamma_inc: float = 0.1

    def __post_init__(self):
        if not (self.gamma_mat > 0 and self.gamma_inc > 0):
            raise MaterialError(
                f"Phase conductivities must be positive, got gamma_mat={self.gamma_mat}, "
                f"gamma_inc={self.gamma_inc}"
            )

    @property
    def is_homogeneous(self) -> bool:
        return self.gamma_mat == self.gamma_inc


@dataclass(frozen=True)
class MaterialField:
    """
    Isotropic two-phase conductivity field γ(x)·I

    Args:
        kind: 'piecewise' (sharp inclusion) or 'smoothed' (tanh transition of width ~ε)
        phases: matrix/inclusion conductivities
        epsilon: transition parameter, required for the smoothed kind
    """

    kind: str
    phases: PhasePair
    epsilon: Optional[float] = None

    def __post_init__(self):
        if self.kind not in (PIECEWISE, SMOOTHED):
            raise MaterialError(f"Unknown material kind '{self.kind}'")
        if self.kind == SMOOTHED and (self.epsilon is None or not self.epsilon > 0):
            raise MaterialError(f"Smoothed material needs epsilon > 0, got {self.epsilon}")

    @property
    def is_smooth(self) -> bool:
        return self.kind == SMOOTHED

    def label(self) -> str:
        if self.kind == SMOOTHED:
            return f"smoothed(eps={self.epsilon:g})"
        return "piecewise"

    def reference(self) -> "MaterialField":
        """The piecewise field with the same phases (what guaranteed bounds refer to)"""
        return MaterialField(PIECEWISE, self.phases)


def piecewise(gamma_mat: float = 1.0, gamma_inc: float = 0.1) -> MaterialField:
    return MaterialField(PIECEWISE, PhasePair(gamma_mat, gamma_inc))


def smoothed(epsilon: float, gamma_mat: float = 1.0, gamma_inc: float = 0.1) -> MaterialField:
    return MaterialField(SMOOTHED, PhasePair(gamma_mat, gamma_inc), epsilon)


def wrap(x) -> np.ndarray:
    """Map coordinates into [0, 2π)"""
    return np.mod(np.asarray(x, dtype=np.float64), TWO_PI)


def smooth_indicator(x_i, epsilon: float) -> np.ndarray:
    """p_ε(x) = ½(1 + tanh(sin(x − π/2)/ε)), a smooth periodic indicator of (π/2, 3π/2)"""
    if not epsilon > 0:
        raise MaterialError(f"epsilon must be positive, got {epsilon}")
    x_i = np.asarray(x_i, dtype=np.float64)
    return 0.5 * (1.0 + np.tanh(np.sin(x_i - 0.5 * math.pi) / epsilon))


def smooth_indicator_derivative(x_i, epsilon: float) -> np.ndarray:
    if not epsilon > 0:
        raise MaterialError(f"epsilon must be positive, got {epsilon}")
    x_i = np.asarray(x_i, dtype=np.float64)
    t = np.tanh(np.sin(x_i - 0.5 * math.pi) / epsilon)
    return 0.5 * (1.0 - t * t) * np.cos(x_i - 0.5 * math.pi) / epsilon


def conductivity_scalar(field: MaterialField, x) -> np.ndarray:
    """γ(x) for points of shape (..., 2)"""
    x = np.asarray(x, dtype=np.float64)
    phases = field.phases
    if field.kind == PIECEWISE:
        xw = wrap(x)
        inside = np.all((xw > INCLUSION_LOW) & (xw < INCLUSION_HIGH), axis=-1)
        return np.where(inside, phases.gamma_inc, phases.gamma_mat)
    p1 = smooth_indicator(x[..., 0], field.epsilon)
    p2 = smooth_indicator(x[..., 1], field.epsilon)
    return phases.gamma_mat + (phases.gamma_inc - phases.gamma_mat) * p1 * p2


def conductivity(field: MaterialField, x) -> np.ndarray:
    """Conductivity tensor A(x) = γ(x)·I with shape (..., 2, 2)"""
    gamma = conductivity_scalar(field, x)
    return gamma[..., None, None] * np.eye(2)


def resistivity(field: MaterialField, x) -> np.ndarray:
    """A⁻¹(x) with shape (..., 2, 2)"""
    gamma = conductivity_scalar(field, x)
    return (1.0 / gamma)[..., None, None] * np.eye(2)


def conductivity_gradient(field: MaterialField, x) -> np.ndarray:
    """∇γ(x) with shape (..., 2); only defined for the smoothed kind"""
    if field.kind != SMOOTHED:
        raise MaterialError("Conductivity gradient is undefined for the piecewise material")
    x = np.asarray(x, dtype=np.float64)
    eps = field.epsilon
    contrast = field.phases.gamma_inc - field.phases.gamma_mat
    p1 = smooth_indicator(x[..., 0], eps)
    p2 = smooth_indicator(x[..., 1], eps)
    dp1 = smooth_indicator_derivative(x[..., 0], eps)
    dp2 = smooth_indicator_derivative(x[..., 1], eps)
    return np.stack([contrast * dp1 * p2, contrast * p1 * dp2], axis=-1)


def obnosov_effective(phases: PhasePair) -> float:
    """Exact effective conductivity of the centred square inclusion (quarter volume fraction)"""
    a, b = phases.gamma_mat, phases.gamma_inc
    if not (a > 0 and b > 0):
        raise MaterialError("Phase conductivities must be positive")
    return a * math.sqrt((a + 3.0 * b) / (3.0 * a + b))


def voigt_reuss(phases: PhasePair, inclusion_fraction: float = 0.25) -> Tuple[float, float]:
    """Arithmetic (upper) and harmonic (lower) volume averages"""
    if not 0.0 <= inclusion_fraction <= 1.0:
        raise MaterialError(f"Inclusion fraction must lie in [0, 1], got {inclusion_fraction}")
    f = inclusion_fraction
    upper = f * phases.gamma_inc + (1.0 - f) * phases.gamma_mat
    lower = 1.0 / (f / phases.gamma_inc + (1.0 - f) / phases.gamma_mat)
    return upper, lower
