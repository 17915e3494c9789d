"""
Quadrature - Periodic collocation grids and trapezoidal integration over the cell
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import torch

from src.autodiff import DTYPE
from src.cell_material import TWO_PI, UNIT_CELL


@dataclass(frozen=True)
class CollocationGrid:
    """
    n × n cell-corner grid starting at the origin

    Point index i·n + j sits at (2π·i/n, 2π·j/n); this matches the DoF numbering of
    the structured FEM mesh with the same n.
    """

    n: int = 128

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError(f"Grid needs n >= 1, got {self.n}")

    @property
    def size(self) -> int:
        return self.n * self.n

    @property
    def spacing(self) -> float:
        return TWO_PI / self.n

    @property
    def cell_area(self) -> float:
        return self.spacing ** 2

    @cached_property
    def points(self) -> np.ndarray:
        ticks = TWO_PI * np.arange(self.n) / self.n
        x1, x2 = np.meshgrid(ticks, ticks, indexing="ij")
        return np.stack([x1.ravel(), x2.ravel()], axis=-1)

    @cached_property
    def tensor(self) -> torch.Tensor:
        return torch.from_numpy(self.points).to(DTYPE)


def integrate(values, grid: CollocationGrid):
    """
    ∫_X f dx for samples on the grid (last axis), batched over leading axes

    For a periodic integrand on a periodic uniform grid the composite trapezoidal rule
    is mean(values)·|X|; the wrap-around row/column is not counted twice.
    """
    n_values = values.shape[-1]
    if n_values != grid.size:
        raise ValueError(f"Got {n_values} samples for a grid of {grid.size} points")
    if isinstance(values, torch.Tensor):
        return values.mean(dim=-1) * UNIT_CELL.area
    return np.asarray(values, dtype=np.float64).mean(axis=-1) * UNIT_CELL.area


def cell_average(values, grid: CollocationGrid):
    """(1/|X|)·∫_X f dx"""
    return integrate(values, grid) / UNIT_CELL.area
