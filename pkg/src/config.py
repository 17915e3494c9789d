"""
Config - Run configuration from YAML files, --set overrides and environment defaults
"""

import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

import torch
import yaml
from dotenv import load_dotenv

from src import cell_material as cm
from src.errors import ConfigError
from src.network import ARCHITECTURES, NetworkConfig
from src.training import STRONG, WEAK, TrainConfig
from src.weak_bases import DEFAULT_TAU, build_network_basis, build_spectral

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)

METHODS = ("pinn", "vspinn", "vnpinn", "fem")
FORMS = ("primal", "dual", "both")
MATERIALS = (cm.PIECEWISE, cm.SMOOTHED)
BASES = ("spectral", "network")
DEFAULT_BASIS = {"vspinn": "spectral", "vnpinn": "network"}

INT_KEYS = (
    "n_periodic", "n_hidden", "n_layers", "M", "N", "n_test", "test_seed", "epochs", "seed",
    "log_every", "checkpoint_every", "grid_n", "fem_n", "fem_max_iter", "check_samples", "check_grid_n",
)
POSITIVE_INT_KEYS = (
    "n_periodic", "n_hidden", "n_layers", "M", "N", "n_test", "epochs", "log_every", "grid_n", "fem_n",
    "fem_max_iter", "check_samples", "check_grid_n",
)
FLOAT_KEYS = (
    "epsilon", "gamma_mat", "gamma_inc", "gram_fallback_tau", "learning_rate", "adam_beta1", "adam_beta2",
    "adam_eps", "fem_rtol", "failure_gap",
)
POSITIVE_FLOAT_KEYS = ("gamma_mat", "gamma_inc", "gram_fallback_tau", "learning_rate", "adam_eps", "fem_rtol")


def default_output_dir() -> str:
    return os.getenv("HOMOG_OUTPUT_DIR", "runs")


@dataclass
class RunConfig:
    """Flat run configuration; every key can be set from YAML or --set"""

    method: str = "fem"
    form: str = "both"
    architecture: Optional[int] = None
    n_periodic: int = 10
    n_hidden: int = 10
    n_layers: int = 2
    material: str = cm.PIECEWISE
    epsilon: Optional[float] = 0.05
    gamma_mat: float = 1.0
    gamma_inc: float = 0.1
    test_basis: Optional[str] = None
    M: int = 10
    N: int = 10
    n_test: int = 50
    test_seed: int = 1000
    gram_fallback_tau: float = DEFAULT_TAU
    epochs: int = 40000
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    log_every: int = 100
    checkpoint_every: int = 0
    grid_n: int = 128
    fem_n: int = 128
    fem_rtol: float = 1e-10
    fem_max_iter: int = 20000
    loading: List[float] = field(default_factory=lambda: [1.0, 0.0])
    output_dir: str = field(default_factory=default_output_dir)
    deterministic: bool = False
    failure_gap: float = 0.10
    check_samples: int = 50
    check_grid_n: int = 32

    # -- construction -----------------------------------------------------------------

    @classmethod
    def keys(cls) -> Tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_dict(cls, data: Dict) -> "RunConfig":
        """Build and validate; every problem is collected before raising ConfigError"""
        data = dict(data or {})
        problems = [f"unknown key '{key}'" for key in sorted(data) if key not in cls.keys()]
        config = cls(**{k: v for k, v in data.items() if k in cls.keys()})
        if isinstance(config.architecture, int) and config.architecture in ARCHITECTURES:
            explicit = [k for k in ("n_periodic", "n_hidden", "n_layers") if k in data]
            if explicit:
                problems.append(f"architecture {config.architecture} conflicts with explicit {', '.join(explicit)}")
            config.n_periodic, config.n_hidden, config.n_layers = ARCHITECTURES[config.architecture]
        problems.extend(config.validate())
        if problems:
            raise ConfigError(problems)
        return config

    def validate(self) -> List[str]:
        problems = []
        for key in INT_KEYS:
            value = getattr(self, key)
            if isinstance(value, bool) or not isinstance(value, int):
                problems.append(f"{key} must be an integer, got {value!r}")
            elif key in POSITIVE_INT_KEYS and value < 1:
                problems.append(f"{key} must be >= 1, got {value}")
            elif value < 0:
                problems.append(f"{key} must be >= 0, got {value}")
        for key in FLOAT_KEYS:
            value = getattr(self, key)
            if key == "epsilon" and value is None:
                continue
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                problems.append(f"{key} must be a number, got {value!r}")
            elif key in POSITIVE_FLOAT_KEYS and not value > 0:
                problems.append(f"{key} must be positive, got {value}")
        for key, allowed in (("method", METHODS), ("form", FORMS), ("material", MATERIALS)):
            if getattr(self, key) not in allowed:
                problems.append(f"{key} must be one of {', '.join(allowed)}, got {getattr(self, key)!r}")
        if self.architecture is not None and not (isinstance(self.architecture, int) and self.architecture in ARCHITECTURES):
            problems.append(f"architecture must be one of {sorted(ARCHITECTURES)}, got {self.architecture!r}")
        if not isinstance(self.deterministic, bool):
            problems.append(f"deterministic must be true or false, got {self.deterministic!r}")

        if self.material == cm.SMOOTHED:
            if isinstance(self.epsilon, bool) or not isinstance(self.epsilon, (int, float)) or not self.epsilon > 0:
                problems.append(f"smoothed material needs epsilon > 0, got {self.epsilon!r}")
        if self.method == "pinn" and self.material == cm.PIECEWISE:
            problems.append("method pinn (strong form) needs the smoothed material; use vspinn or vnpinn on piecewise")

        if self.test_basis is not None and self.test_basis not in BASES:
            problems.append(f"test_basis must be one of {', '.join(BASES)}, got {self.test_basis!r}")
        elif self.test_basis is not None:
            expected = DEFAULT_BASIS.get(self.method)
            if expected is None:
                problems.append(f"method {self.method} takes no test basis, got test_basis={self.test_basis}")
            elif expected != self.test_basis:
                problems.append(f"method {self.method} uses the {expected} basis, got test_basis={self.test_basis}")

        for key in ("grid_n", "fem_n", "check_grid_n"):
            value = getattr(self, key)
            if isinstance(value, int) and not isinstance(value, bool) and value % 4 != 0:
                problems.append(f"{key} must be divisible by 4 to align with the inclusion, got {value}")

        loading = self.loading
        if (not isinstance(loading, (list, tuple)) or len(loading) != 2
                or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in loading)):
            problems.append(f"loading must be a 2-vector, got {loading!r}")
        elif abs(math.hypot(*loading) - 1.0) > 1e-12:
            problems.append(f"loading must be a unit vector, got {list(loading)}")
        for key in ("adam_beta1", "adam_beta2"):
            value = getattr(self, key)
            if isinstance(value, (int, float)) and not 0.0 <= value < 1.0:
                problems.append(f"{key} must lie in [0, 1), got {value}")
        return problems

    # -- derived objects ----------------------------------------------------------------

    @property
    def loss_form(self) -> str:
        return STRONG if self.method == "pinn" else WEAK

    @property
    def sides(self) -> Tuple[str, ...]:
        return ("primal", "dual") if self.form == "both" else (self.form,)

    @property
    def basis_kind(self) -> Optional[str]:
        return self.test_basis or DEFAULT_BASIS.get(self.method)

    def network_config(self) -> NetworkConfig:
        return NetworkConfig(self.n_periodic, self.n_hidden, self.n_layers)

    def material_field(self) -> cm.MaterialField:
        if self.material == cm.PIECEWISE:
            return cm.piecewise(self.gamma_mat, self.gamma_inc)
        return cm.smoothed(self.epsilon, self.gamma_mat, self.gamma_inc)

    def build_basis(self):
        if self.basis_kind == "spectral":
            return build_spectral(self.M, self.N)
        if self.basis_kind == "network":
            return build_network_basis(self.network_config(), self.n_test, self.test_seed)
        return None

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps,
            seed=self.seed,
            log_every=self.log_every,
            checkpoint_every=self.checkpoint_every,
            grid_n=self.grid_n,
            failure_gap=self.failure_gap,
            gram_fallback_tau=self.gram_fallback_tau,
            deterministic=self.deterministic,
        )

    def to_dict(self) -> Dict:
        return asdict(self)


def parse_override(item: str) -> Tuple[str, object]:
    """'key=value' with the value parsed as YAML (so 0.05, true and [1, 0] keep their types)"""
    if "=" not in item:
        raise ConfigError([f"override '{item}' is not of the form key=value"])
    key, raw = item.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ConfigError([f"override '{item}': {e}"]) from e
    return key.strip(), value


def read_yaml(path) -> Dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"config file {path} not found"])
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ConfigError([f"{path}: {e}"]) from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError([f"{path}: top level must be a mapping of keys to values"])
    return data


def load_config(path=None, overrides: Iterable[str] = (), **flags) -> RunConfig:
    """
    File values, then --set overrides, then explicit CLI flags (None flags are ignored)

    Raises:
        ConfigError: listing every problem found
    """
    data = read_yaml(path) if path else {}
    for item in overrides:
        key, value = parse_override(item)
        data[key] = value
    for key, value in flags.items():
        if value is not None:
            data[key] = value
    return RunConfig.from_dict(data)


def apply_environment() -> None:
    """Torch thread count from HOMOG_NUM_THREADS, when set"""
    threads = os.getenv("HOMOG_NUM_THREADS")
    if not threads:
        return
    try:
        torch.set_num_threads(int(threads))
        logger.debug(f"Torch intra-op threads: {threads}")
    except ValueError:
        logger.warning(f"⚠️ Ignoring HOMOG_NUM_THREADS={threads!r} (not an integer)")

