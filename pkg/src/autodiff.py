"""
Autodiff - Second-order spatial jets and parameter gradients

Spatial derivatives are propagated forward through `Jet2` arithmetic (the input
dimension is 2). Parameter gradients come from reverse accumulation over the jet
computation, recorded by torch autograd on the flat parameter tensor.

A Jet2 holds tensors batched over an arbitrary leading shape S:
    value: S
    grad:  S + (2,)
    hess:  S + (2, 2)
"""

import logging
from typing import Callable, Optional, Sequence, Tuple, Union

import torch

from src.errors import NonFiniteError

logger = logging.getLogger(__name__)

DTYPE = torch.float64

Scalar = Union[float, int, torch.Tensor]


def _outer(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return a.unsqueeze(-1) * b.unsqueeze(-2)


def _as_tensor(c: Scalar) -> torch.Tensor:
    if isinstance(c, torch.Tensor):
        return c
    return torch.as_tensor(c, dtype=DTYPE)


class Jet2:
    """Value, spatial gradient and spatial Hessian of a scalar field"""

    __slots__ = ("value", "grad", "hess")

    def __init__(self, value: torch.Tensor, grad: torch.Tensor, hess: torch.Tensor):
        self.value = value
        self.grad = grad
        self.hess = hess

    # -- construction -----------------------------------------------------------------

    @staticmethod
    def variable(coordinate: torch.Tensor, axis: int) -> "Jet2":
        """Seed jet of the coordinate x_axis"""
        coordinate = _as_tensor(coordinate).to(DTYPE)
        grad = torch.zeros(coordinate.shape + (2,), dtype=DTYPE)
        grad[..., axis] = 1.0
        hess = torch.zeros(coordinate.shape + (2, 2), dtype=DTYPE)
        return Jet2(coordinate, grad, hess)

    @staticmethod
    def constant(value: Scalar, shape: Sequence[int] = ()) -> "Jet2":
        value = _as_tensor(value).to(DTYPE)
        if shape:
            value = value.expand(tuple(shape))
        return Jet2(value, torch.zeros(value.shape + (2,), dtype=DTYPE),
                    torch.zeros(value.shape + (2, 2), dtype=DTYPE))

    @staticmethod
    def cat(jets: Sequence["Jet2"], dim: int = -1) -> "Jet2":
        """Concatenate along a feature axis of the value shape"""
        if dim >= 0:
            raise ValueError("Jet2.cat expects a negative dim (counted on the value shape)")
        return Jet2(
            torch.cat([j.value for j in jets], dim=dim),
            torch.cat([j.grad for j in jets], dim=dim - 1),
            torch.cat([j.hess for j in jets], dim=dim - 2),
        )

    # -- shape helpers ----------------------------------------------------------------

    @property
    def shape(self) -> torch.Size:
        return self.value.shape

    def unsqueeze(self) -> "Jet2":
        """Append a singleton feature axis to the value shape"""
        return Jet2(self.value.unsqueeze(-1), self.grad.unsqueeze(-2), self.hess.unsqueeze(-3))

    def squeeze(self) -> "Jet2":
        """Drop a trailing singleton feature axis"""
        return Jet2(self.value.squeeze(-1), self.grad.squeeze(-2), self.hess.squeeze(-3))

    def symmetrized(self) -> "Jet2":
        return Jet2(self.value, self.grad, 0.5 * (self.hess + self.hess.transpose(-1, -2)))

    def detach(self) -> "Jet2":
        return Jet2(self.value.detach(), self.grad.detach(), self.hess.detach())

    @property
    def laplacian(self) -> torch.Tensor:
        return self.hess[..., 0, 0] + self.hess[..., 1, 1]

    # -- arithmetic -------------------------------------------------------------------

    def _scale(self, c: torch.Tensor) -> "Jet2":
        return Jet2(self.value * c, self.grad * c.unsqueeze(-1), self.hess * c.unsqueeze(-1).unsqueeze(-1))

    def __add__(self, other) -> "Jet2":
        if isinstance(other, Jet2):
            return Jet2(self.value + other.value, self.grad + other.grad, self.hess + other.hess)
        value = self.value + _as_tensor(other)
        return Jet2(value, self.grad.expand(value.shape + (2,)), self.hess.expand(value.shape + (2, 2)))

    __radd__ = __add__

    def __neg__(self) -> "Jet2":
        return Jet2(-self.value, -self.grad, -self.hess)

    def __sub__(self, other) -> "Jet2":
        return self + (-other)

    def __rsub__(self, other) -> "Jet2":
        return (-self) + other

    def __mul__(self, other) -> "Jet2":
        if not isinstance(other, Jet2):
            return self._scale(_as_tensor(other))
        f, g = self, other
        value = f.value * g.value
        grad = f.grad * g.value.unsqueeze(-1) + g.grad * f.value.unsqueeze(-1)
        hess = (
            f.hess * g.value.unsqueeze(-1).unsqueeze(-1)
            + g.hess * f.value.unsqueeze(-1).unsqueeze(-1)
            + _outer(f.grad, g.grad)
            + _outer(g.grad, f.grad)
        )
        return Jet2(value, grad, hess)

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet2":
        if bool(torch.any(self.value == 0)):
            raise ZeroDivisionError("Jet2 division by a jet with zero value")
        inv = 1.0 / self.value
        return self._chain(inv, -inv * inv, 2.0 * inv * inv * inv)

    def __truediv__(self, other) -> "Jet2":
        if isinstance(other, Jet2):
            return self * other.reciprocal()
        other = _as_tensor(other)
        if bool(torch.any(other == 0)):
            raise ZeroDivisionError("Jet2 division by zero")
        return self._scale(1.0 / other)

    def __rtruediv__(self, other) -> "Jet2":
        return self.reciprocal() * other

    def _chain(self, d0: torch.Tensor, d1: torch.Tensor, d2: torch.Tensor) -> "Jet2":
        """Apply a scalar function with value d0 and derivatives d1, d2 at self.value"""
        grad = d1.unsqueeze(-1) * self.grad
        hess = d1.unsqueeze(-1).unsqueeze(-1) * self.hess + d2.unsqueeze(-1).unsqueeze(-1) * _outer(self.grad, self.grad)
        return Jet2(d0, grad, hess)

    def tanh(self) -> "Jet2":
        t = torch.tanh(self.value)
        s = 1.0 - t * t
        return self._chain(t, s, -2.0 * t * s)

    def sin(self) -> "Jet2":
        s, c = torch.sin(self.value), torch.cos(self.value)
        return self._chain(s, c, -s)

    def cos(self) -> "Jet2":
        s, c = torch.sin(self.value), torch.cos(self.value)
        return self._chain(c, -s, -c)

    def linear(self, weight: torch.Tensor, bias: Optional[torch.Tensor] = None) -> "Jet2":
        """Affine map on the trailing feature axis: y_j = Σ_k W_jk x_k + b_j"""
        value = self.value @ weight.transpose(0, 1)
        if bias is not None:
            value = value + bias
        grad = torch.einsum("...kd,jk->...jd", self.grad, weight)
        hess = torch.einsum("...kde,jk->...jde", self.hess, weight)
        return Jet2(value, grad, hess)

    def __repr__(self) -> str:
        return f"Jet2(shape={tuple(self.value.shape)})"


def coordinate_jets(x: torch.Tensor) -> Tuple[Jet2, Jet2]:
    """Seed jets for x₁ and x₂ from points of shape (..., 2)"""
    x = _as_tensor(x).to(DTYPE)
    return Jet2.variable(x[..., 0], 0), Jet2.variable(x[..., 1], 1)


def jet_eval(f: Callable[[Jet2, Jet2], Jet2], x) -> Jet2:
    """
    Evaluate a scalar expression of (x₁, x₂) with exact first and second derivatives

    Args:
        f: expression built from Jet2 arithmetic (+, −, ×, ÷, tanh, sin, cos, constants)
        x: a point (2,) or a batch of points (..., 2)

    Returns:
        Jet2 with the value shape of the point batch
    """
    x1, x2 = coordinate_jets(x)
    out = f(x1, x2)
    if not isinstance(out, Jet2):
        out = Jet2.constant(out, x1.shape)
    return out.symmetrized()


class ParamTape:
    """
    Reverse accumulation of a scalar loss onto a flat parameter vector

    The tape is the autograd graph built while the loss closure runs on a leaf copy of
    the parameters. Each call records a fresh graph; a tape object is single-writer.

    Args:
        n_params: expected length of the parameter vector
    """

    def __init__(self, n_params: int):
        self.n_params = int(n_params)

    def gradient(
        self, loss_fn: Callable[[torch.Tensor], torch.Tensor], params: torch.Tensor
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        Returns:
            Tuple of (loss value as 0-d tensor, dLoss/dθ with the shape of params)
        """
        if params.numel() != self.n_params:
            raise ValueError(
                f"Parameter count mismatch: tape expects {self.n_params}, got {params.numel()}"
            )
        theta = params.detach().clone().requires_grad_(True)
        loss = loss_fn(theta)
        if not isinstance(loss, torch.Tensor):
            loss = torch.as_tensor(loss, dtype=DTYPE)
        if not bool(torch.isfinite(loss)):
            raise NonFiniteError("loss", f"value {loss.item()}")
        if not loss.requires_grad:
            return loss.detach(), torch.zeros_like(theta.detach())
        (grad,) = torch.autograd.grad(loss, theta, allow_unused=True)
        if grad is None:
            grad = torch.zeros_like(theta)
        if not bool(torch.all(torch.isfinite(grad))):
            bad = int((~torch.isfinite(grad)).sum())
            raise NonFiniteError("parameter gradient", f"{bad} non-finite entries")
        return loss.detach(), grad.detach()


def param_gradient(loss_fn: Callable[[torch.Tensor], torch.Tensor], params: torch.Tensor,
                   n_params: Optional[int] = None) -> torch.Tensor:
    """dLoss/dθ for every parameter θ (see ParamTape)"""
    tape = ParamTape(params.numel() if n_params is None else n_params)
    return tape.gradient(loss_fn, params)[1]


def set_deterministic(enabled: bool) -> None:
    """Fixed-order reductions for reproducible runs"""
    torch.use_deterministic_algorithms(bool(enabled))
    logger.debug(f"Deterministic algorithms {'on' if enabled else 'off'}")
