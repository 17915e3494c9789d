"""
Periodic Network - Learnable-cosine periodic layer followed by tanh residual layers

Flat parameter layout (float64):
    periodic layer   U (n_p, 2), V (n_p, 2), B (n_p, 2)        -> 6·n_p
    first hidden     W₁ (n_h, 2·n_p), b₁ (n_h)                 -> 2·n_p·n_h + n_h
    residual blocks  W_l (n_h, n_h), b_l (n_h), l = 2..L        -> (L−1)·(n_h² + n_h)
    output head      w (n_h), c                                 -> n_h + 1

Periodic feature (i, j) is U_ij·cos(x_j) + V_ij·sin(x_j) + B_ij, so the output is
exactly 2π-periodic for any parameter values. First-layer columns are ordered
coordinate-major: column j·n_p + i holds feature (i, j).
"""

import csv
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Tuple

import numpy as np
import torch

from src.autodiff import DTYPE, Jet2, coordinate_jets

logger = logging.getLogger(__name__)

PARAMS_MAGIC = b"PNET"

# Preset configurations keyed by parameter count
ARCHITECTURES: Dict[int, Tuple[int, int, int]] = {
    65: (4, 4, 1),
    391: (10, 10, 2),
    1801: (20, 20, 3),
    15601: (50, 50, 5),
}


@dataclass(frozen=True)
class NetworkConfig:
    """Periodic neurons, neurons per hidden layer, number of hidden layers"""

    n_periodic: int
    n_hidden: int
    n_layers: int

    def __post_init__(self):
        for name in ("n_periodic", "n_hidden", "n_layers"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")

    @classmethod
    def from_param_count(cls, count: int) -> "NetworkConfig":
        if count not in ARCHITECTURES:
            raise ValueError(f"No preset architecture with {count} parameters (known: {sorted(ARCHITECTURES)})")
        return cls(*ARCHITECTURES[count])

    def as_tuple(self) -> Tuple[int, int, int]:
        return (self.n_periodic, self.n_hidden, self.n_layers)


def param_count(config: NetworkConfig) -> int:
    n_p, n_h, n_l = config.as_tuple()
    return 6 * n_p + 2 * n_p * n_h + n_h + (n_l - 1) * (n_h * n_h + n_h) + (n_h + 1)


@dataclass(frozen=True)
class PeriodicNet:
    """A configuration plus its flat parameter vector"""

    config: NetworkConfig
    params: torch.Tensor

    def __post_init__(self):
        expected = param_count(self.config)
        if self.params.ndim != 1 or self.params.numel() != expected:
            raise ValueError(f"Parameter vector has {self.params.numel()} entries, config needs {expected}")

    @property
    def size(self) -> int:
        return self.params.numel()

    def with_params(self, params: torch.Tensor) -> "PeriodicNet":
        return PeriodicNet(self.config, params)


def unpack(config: NetworkConfig, params: torch.Tensor) -> Dict[str, object]:
    """Split the flat vector into named views (autograd flows through the views)"""
    n_p, n_h, n_l = config.as_tuple()
    offset = 0

    def take(*shape):
        nonlocal offset
        size = math.prod(shape)
        block = params[offset:offset + size].reshape(shape)
        offset += size
        return block

    layers = {
        "U": take(n_p, 2),
        "V": take(n_p, 2),
        "B": take(n_p, 2),
        "W1": take(n_h, 2 * n_p),
        "b1": take(n_h),
        "blocks": [(take(n_h, n_h), take(n_h)) for _ in range(n_l - 1)],
        "w_out": take(1, n_h),
        "c_out": take(1),
    }
    return layers


def init(config: NetworkConfig, seed: int) -> PeriodicNet:
    """
    Deterministic initialization

    Periodic-layer coefficients ~ U[−1, 1]; hidden and output weights ~ N(0, 1)/sqrt(fan_in);
    biases zero.
    """
    n_p, n_h, n_l = config.as_tuple()
    gen = torch.Generator().manual_seed(int(seed))
    parts = [torch.rand(3 * n_p * 2, generator=gen, dtype=DTYPE) * 2.0 - 1.0]
    parts.append(torch.randn(n_h * 2 * n_p, generator=gen, dtype=DTYPE) / math.sqrt(2 * n_p))
    parts.append(torch.zeros(n_h, dtype=DTYPE))
    for _ in range(n_l - 1):
        parts.append(torch.randn(n_h * n_h, generator=gen, dtype=DTYPE) / math.sqrt(n_h))
        parts.append(torch.zeros(n_h, dtype=DTYPE))
    parts.append(torch.randn(n_h, generator=gen, dtype=DTYPE) / math.sqrt(n_h))
    parts.append(torch.zeros(1, dtype=DTYPE))
    return PeriodicNet(config, torch.cat(parts))


def zeros(config: NetworkConfig) -> PeriodicNet:
    return PeriodicNet(config, torch.zeros(param_count(config), dtype=DTYPE))


def periodic_features(net: PeriodicNet, x: torch.Tensor) -> Jet2:
    layers = unpack(net.config, net.params)
    x1, x2 = coordinate_jets(x)
    features = []
    for j, xj in enumerate((x1, x2)):
        c, s = xj.cos().unsqueeze(), xj.sin().unsqueeze()
        features.append(c * layers["U"][:, j] + s * layers["V"][:, j] + layers["B"][:, j])
    return Jet2.cat(features, dim=-1)


def forward(net: PeriodicNet, x) -> Jet2:
    """
    Network output with exact spatial gradient and Hessian

    Args:
        net: network to evaluate
        x: a point (2,) or points (P, 2)

    Returns:
        Jet2 with value shape () or (P,)
    """
    x = torch.as_tensor(x, dtype=DTYPE)
    layers = unpack(net.config, net.params)
    h = periodic_features(net, x).linear(layers["W1"], layers["b1"]).tanh()
    for weight, bias in layers["blocks"]:
        h = h + h.linear(weight, bias).tanh()
    out = h.linear(layers["w_out"], layers["c_out"]).squeeze()
    return out.symmetrized()


def values(net: PeriodicNet, x) -> torch.Tensor:
    """Output values only, without the autograd graph"""
    with torch.no_grad():
        return forward(net, x).value


# -- persistence ----------------------------------------------------------------------

def save_params(net: PeriodicNet, path) -> Path:
    """Flat little-endian binary: 16-byte header (magic + config triple) then float64 data"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = PARAMS_MAGIC + struct.pack("<3I", *net.config.as_tuple())
    data = net.params.detach().cpu().numpy().astype("<f8").tobytes()
    path.write_bytes(header + data)
    return path


def load_params(path) -> PeriodicNet:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != PARAMS_MAGIC:
        raise ValueError(f"{path} is not a parameter file (bad magic)")
    config = NetworkConfig(*struct.unpack("<3I", raw[4:16]))
    data = np.frombuffer(raw[16:], dtype="<f8")
    if data.size != param_count(config):
        raise ValueError(f"{path}: {data.size} values stored, config {config.as_tuple()} needs {param_count(config)}")
    return PeriodicNet(config, torch.from_numpy(data.astype(np.float64)))


def export_params_csv(net: PeriodicNet, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["index", "value"])
        for i, v in enumerate(net.params.detach().cpu().tolist()):
            writer.writerow([i, repr(v)])
    return path
