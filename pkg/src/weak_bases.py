"""
Weak Bases - Test-function bases for the variational losses and their Gram matrices

Two families are supported:
  - spectral: sin(m x₁ + n x₂), cos(m x₁ + n x₂) for m = 0..M, n = 0..N, (m, n) ≠ (0, 0)
  - network: randomly initialised periodic networks sharing the trial architecture

Gradient tables are evaluated once per grid and cached; they never enter the
parameter tape.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch

from src.autodiff import DTYPE
from src.errors import GramError
from src.network import NetworkConfig, PeriodicNet, forward, init
from src.quadrature import CollocationGrid

logger = logging.getLogger(__name__)

DEFAULT_TAU = 1e-10


class _TabulatedMixin:
    """Caches gradient tables (N, P, 2) per grid size"""

    def _tables(self) -> Dict[int, torch.Tensor]:
        if not hasattr(self, "_table_cache"):
            self._table_cache = {}
        return self._table_cache

    def gradient_table(self, grid: CollocationGrid) -> torch.Tensor:
        tables = self._tables()
        if grid.n not in tables:
            tables[grid.n] = self.gradients_at(grid.tensor)
            logger.debug(f"Tabulated {self.size} test gradients on {grid.n}x{grid.n} grid")
        return tables[grid.n]


class SpectralBasis(_TabulatedMixin):
    """Sine-cosine basis over non-negative frequency pairs"""

    kind = "spectral"

    def __init__(self, M: int, N: int):
        if M < 1 or N < 1:
            raise ValueError(f"Spectral basis needs M, N >= 1, got M={M}, N={N}")
        self.M, self.N = int(M), int(N)
        self.modes: List[Tuple[str, int, int]] = []
        for m in range(self.M + 1):
            for n in range(self.N + 1):
                if m == 0 and n == 0:
                    continue
                self.modes.append(("sin", m, n))
                self.modes.append(("cos", m, n))
        self._freq = torch.tensor([[m, n] for _, m, n in self.modes], dtype=DTYPE)
        self._is_sin = torch.tensor([k == "sin" for k, _, _ in self.modes])

    @property
    def size(self) -> int:
        return len(self.modes)

    def _phase(self, x: torch.Tensor) -> torch.Tensor:
        x = torch.as_tensor(x, dtype=DTYPE)
        return torch.einsum("nd,...d->n...", self._freq, x)

    def values(self, x) -> torch.Tensor:
        """(N, ...) values at points (..., 2)"""
        phase = self._phase(x)
        mask = self._is_sin.reshape((-1,) + (1,) * (phase.ndim - 1))
        return torch.where(mask, torch.sin(phase), torch.cos(phase))

    def gradients_at(self, x) -> torch.Tensor:
        """(N, ..., 2) gradients at points (..., 2)"""
        phase = self._phase(x)
        mask = self._is_sin.reshape((-1,) + (1,) * (phase.ndim - 1))
        amplitude = torch.where(mask, torch.cos(phase), -torch.sin(phase))
        freq = self._freq.reshape((self.size,) + (1,) * (phase.ndim - 1) + (2,))
        return amplitude.unsqueeze(-1) * freq


class NetworkBasis(_TabulatedMixin):
    """
    Randomly initialised periodic networks used as test functions

    Args:
        config: architecture shared with the trial network
        count: number of test functions N_t
        seed: instance k is initialised with seed + k
    """

    kind = "network"

    def __init__(self, config: NetworkConfig, count: int, seed: int):
        if count < 1:
            raise ValueError(f"Network basis needs at least one member, got {count}")
        self.config = config
        self.seed = int(seed)
        self.nets: List[PeriodicNet] = [init(config, self.seed + k) for k in range(int(count))]

    @property
    def size(self) -> int:
        return len(self.nets)

    def values(self, x) -> torch.Tensor:
        with torch.no_grad():
            return torch.stack([forward(net, x).value for net in self.nets])

    def gradients_at(self, x) -> torch.Tensor:
        with torch.no_grad():
            return torch.stack([forward(net, x).grad for net in self.nets])


class TabulatedBasis:
    """A basis known only through its gradient table on one grid"""

    kind = "tabulated"

    def __init__(self, table: torch.Tensor, grid_n: int):
        self.table = table
        self.grid_n = int(grid_n)

    @property
    def size(self) -> int:
        return self.table.shape[0]

    def gradient_table(self, grid: CollocationGrid) -> torch.Tensor:
        if grid.n != self.grid_n:
            raise ValueError(f"Tabulated basis lives on a {self.grid_n} grid, got {grid.n}")
        return self.table


def build_spectral(M: int, N: int) -> SpectralBasis:
    return SpectralBasis(M, N)


def build_network_basis(config: NetworkConfig, n_test: int, seed: int) -> NetworkBasis:
    return NetworkBasis(config, n_test, seed)


def recombine(basis, T: torch.Tensor, grid: CollocationGrid) -> TabulatedBasis:
    """Basis φ'_k = Σ_n T_nk φ_n, tabulated on the grid"""
    table = basis.gradient_table(grid)
    T = torch.as_tensor(T, dtype=DTYPE)
    if T.shape[0] != table.shape[0]:
        raise ValueError(f"Recombination matrix has {T.shape[0]} rows for a basis of {table.shape[0]}")
    return TabulatedBasis(torch.einsum("nk,npd->kpd", T, table), grid.n)


# -- Gram matrices --------------------------------------------------------------------

@dataclass
class Gram:
    """
    Gram matrix of test-function gradients, full or diagonal

    Attributes:
        form: 'full' or 'diagonal'
        matrix: (N, N) for the full form
        diagonal: (N,) for the diagonal form
        smallest_eigenvalue, largest_eigenvalue: conditioning report (full form)
        fallback_used: True when the diagonal replaced an ill-conditioned full matrix
    """

    form: str
    matrix: Optional[torch.Tensor] = None
    diagonal: Optional[torch.Tensor] = None
    smallest_eigenvalue: Optional[float] = None
    largest_eigenvalue: Optional[float] = None
    fallback_used: bool = False
    note: str = ""

    def __post_init__(self):
        self._cholesky = None

    @property
    def size(self) -> int:
        return (self.matrix if self.form == "full" else self.diagonal).shape[0]

    def cholesky(self) -> torch.Tensor:
        if self._cholesky is None:
            factor, info = torch.linalg.cholesky_ex(self.matrix)
            if int(info) != 0:
                smallest = float(torch.linalg.eigvalsh(self.matrix)[0])
                raise GramError(
                    f"Gram matrix is not positive definite (smallest eigenvalue {smallest:.3e}); "
                    "use the diagonal fallback", smallest,
                )
            self._cholesky = factor
        return self._cholesky

    def conditioning(self) -> Dict[str, Optional[float]]:
        ratio = None
        if self.smallest_eigenvalue is not None and self.largest_eigenvalue:
            ratio = self.smallest_eigenvalue / self.largest_eigenvalue
        return {
            "form": self.form,
            "smallest_eigenvalue": self.smallest_eigenvalue,
            "largest_eigenvalue": self.largest_eigenvalue,
            "relative_smallest": ratio,
            "fallback_used": self.fallback_used,
            "note": self.note,
        }


def spectral_inverse_gram_diag(basis: SpectralBasis) -> torch.Tensor:
    """1/(m² + n²) per member; the constant area factor 2π² is dropped"""
    return 1.0 / (basis._freq ** 2).sum(dim=-1)


def spectral_gram(basis: SpectralBasis) -> Gram:
    """Diagonal Gram in the m² + n² convention used for spectral training"""
    return Gram("diagonal", diagonal=(basis._freq ** 2).sum(dim=-1), note="spectral m^2+n^2")


def numeric_gram(basis, grid: CollocationGrid) -> Gram:
    """G_nm = ∫_X ∇φ_n·∇φ_m dx by trapezoidal quadrature, with a conditioning report"""
    table = basis.gradient_table(grid)
    matrix = torch.einsum("npd,mpd->nm", table, table) * grid.cell_area
    matrix = 0.5 * (matrix + matrix.transpose(0, 1))
    eig = torch.linalg.eigvalsh(matrix)
    gram = Gram(
        "full",
        matrix=matrix,
        smallest_eigenvalue=float(eig[0]),
        largest_eigenvalue=float(eig[-1]),
    )
    logger.debug(f"Numeric Gram {gram.size}x{gram.size}: eig range [{gram.smallest_eigenvalue:.3e}, "
                 f"{gram.largest_eigenvalue:.3e}]")
    return gram


def gram_fallback_diagonal(basis, grid: CollocationGrid) -> Gram:
    """Diagonal of self-energies G_n = ∫_X |∇φ_n|² dx"""
    table = basis.gradient_table(grid)
    diagonal = (table * table).sum(dim=(-1, -2)) * grid.cell_area
    zero = torch.nonzero(diagonal <= 0).flatten().tolist()
    if zero:
        raise GramError(f"Test functions {zero} are constant (zero self-energy)", 0.0)
    return Gram("diagonal", diagonal=diagonal, note="self-energy diagonal")


def select_gram(basis, grid: CollocationGrid, tau: float = DEFAULT_TAU) -> Gram:
    """
    Numeric Gram, or its diagonal fallback when smallest ≤ τ·largest eigenvalue

    Spectral bases use the analytic m² + n² diagonal.
    """
    if isinstance(basis, SpectralBasis):
        return spectral_gram(basis)
    gram = numeric_gram(basis, grid)
    if gram.smallest_eigenvalue <= tau * gram.largest_eigenvalue:
        logger.warning(
            f"⚠️ Gram matrix ill-conditioned (smallest {gram.smallest_eigenvalue:.3e}, "
            f"largest {gram.largest_eigenvalue:.3e}, tau {tau:g}); using diagonal fallback"
        )
        fallback = gram_fallback_diagonal(basis, grid)
        fallback.smallest_eigenvalue = gram.smallest_eigenvalue
        fallback.largest_eigenvalue = gram.largest_eigenvalue
        fallback.fallback_used = True
        fallback.note = f"diagonal fallback (tau={tau:g})"
        return fallback
    return gram
