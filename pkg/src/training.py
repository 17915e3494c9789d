"""
Training - Full-batch Adam training of primal and dual networks

All four variants share one loop: strong-form PINN losses on a smoothed material, or
Gram-weighted weak-form residuals over a spectral (VSPINN) or network (VNPINN) test
basis. Quick estimates, the primal-dual gap and guaranteed bounds of the current
projections are logged every `log_every` epochs.
"""

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import torch

from src import cell_material as cm
from src.autodiff import DTYPE, ParamTape, set_deterministic
from src.bounds import BoundReport, guaranteed_bounds, project_to_p1, quick_estimate_dual, quick_estimate_primal
from src.errors import MaterialError, NonFiniteError, TrainingAborted
from src.fem import TriMesh, build_mesh
from src.losses import (
    gram_weighted_loss,
    sample_material,
    strong_dual_loss,
    strong_primal_loss,
    weak_residual_dual,
    weak_residual_primal,
)
from src.network import PeriodicNet, save_params, zeros
from src.quadrature import CollocationGrid
from src.weak_bases import DEFAULT_TAU, Gram, select_gram

logger = logging.getLogger(__name__)

SIDES = ("primal", "dual")
STRONG = "strong"
WEAK = "weak"
DUAL_CONVENTION = "reciprocal of B11"


@dataclass
class TrainConfig:
    """Optimizer and logging settings"""

    epochs: int = 40000
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    log_every: int = 100
    checkpoint_every: int = 0
    grid_n: int = 128
    failure_gap: float = 0.10
    gram_fallback_tau: float = DEFAULT_TAU
    # None leaves the process-wide setting untouched (sweeps apply it once)
    deterministic: Optional[bool] = False

    def __post_init__(self):
        if int(self.epochs) < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if int(self.log_every) < 1:
            raise ValueError(f"log_every must be >= 1, got {self.log_every}")


@dataclass
class AdamState:
    """First/second moment estimates and the step counter"""

    m: torch.Tensor
    v: torch.Tensor
    t: int = 0

    @classmethod
    def zeros(cls, n_params: int) -> "AdamState":
        return cls(torch.zeros(n_params, dtype=DTYPE), torch.zeros(n_params, dtype=DTYPE), 0)


def adam_step(params: torch.Tensor, grads: torch.Tensor, state: AdamState,
              config: TrainConfig) -> Tuple[torch.Tensor, AdamState]:
    """
    One bias-corrected Adam update

    Returns:
        Tuple of (new parameters, new state); the inputs are left untouched
    """
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError(
            f"Adam shapes differ: params {tuple(params.shape)}, grads {tuple(grads.shape)}, "
            f"state {tuple(state.m.shape)}"
        )
    if not bool(torch.all(torch.isfinite(grads))):
        raise NonFiniteError("adam step", "gradient")
    b1, b2 = config.adam_beta1, config.adam_beta2
    t = state.t + 1
    m = b1 * state.m + (1.0 - b1) * grads
    v = b2 * state.v + (1.0 - b2) * grads * grads
    m_hat = m / (1.0 - b1 ** t)
    v_hat = v / (1.0 - b2 ** t)
    new_params = params - config.learning_rate * m_hat / (torch.sqrt(v_hat) + config.adam_eps)
    return new_params, AdamState(m, v, t)


@dataclass
class LossSpec:
    """
    What one network is trained on

    Args:
        form: 'strong' or 'weak'
        side: 'primal' or 'dual'
        material: training material (smoothed for the strong form)
        loading: macroscopic gradient ξ (primal) or flux ζ (dual)
        basis: test basis for the weak form
        gram: Gram weighting; selected from the basis when omitted
    """

    form: str
    side: str
    material: cm.MaterialField
    loading: Tuple[float, float] = (1.0, 0.0)
    basis: Optional[object] = None
    gram: Optional[Gram] = None

    def __post_init__(self):
        if self.form not in (STRONG, WEAK):
            raise ValueError(f"Unknown loss form '{self.form}'")
        if self.side not in SIDES:
            raise ValueError(f"Unknown side '{self.side}'")
        if self.form == STRONG and not self.material.is_smooth:
            raise MaterialError("Strong-form training needs a smoothed material")
        if self.form == WEAK and self.basis is None:
            raise ValueError("Weak-form training needs a test basis")


@dataclass
class RunRecord:
    """Everything a run persists to run.json"""

    method: str
    config: Dict
    history: List[Dict] = field(default_factory=list)
    final: Optional[Dict] = None
    final_loss: Dict[str, Optional[float]] = field(default_factory=dict)
    suspected_failure: Optional[bool] = None
    gram: Dict[str, Dict] = field(default_factory=dict)
    metadata: Dict = field(default_factory=dict)
    status: str = "completed"
    error: Optional[str] = None
    wall_clock_seconds: float = 0.0
    created_at: str = ""

    def to_dict(self) -> Dict:
        return asdict(self)


class _SideTrainer:
    """Owns one network, its loss closure and its Adam state"""

    def __init__(self, net: PeriodicNet, spec: LossSpec, config: TrainConfig, grid: CollocationGrid):
        self.net = net
        self.spec = spec
        self.config = config
        self.grid = grid
        self.sample = sample_material(spec.material, grid.points)
        self.tape = ParamTape(net.size)
        self.state = AdamState.zeros(net.size)
        self.gram = None
        if spec.form == WEAK:
            self.gram = spec.gram or select_gram(spec.basis, grid, config.gram_fallback_tau)
            if self.gram.fallback_used:
                logger.warning(f"⚠️ {spec.side}: {self.gram.note}")

    def loss(self, theta: torch.Tensor) -> torch.Tensor:
        net = self.net.with_params(theta)
        spec = self.spec
        if spec.form == STRONG:
            loss_fn = strong_primal_loss if spec.side == "primal" else strong_dual_loss
            return loss_fn(net, spec.material, spec.loading, self.grid, self.sample)
        residual_fn = weak_residual_primal if spec.side == "primal" else weak_residual_dual
        residual = residual_fn(net, spec.material, spec.loading, spec.basis, self.grid, self.sample)
        return gram_weighted_loss(residual, self.gram)

    def step(self) -> float:
        """Loss at the current parameters, then one Adam update"""
        loss, grad = self.tape.gradient(self.loss, self.net.params)
        params, self.state = adam_step(self.net.params, grad, self.state, self.config)
        self.net = self.net.with_params(params)
        return float(loss)

    def current_loss(self) -> float:
        with torch.no_grad():
            value = float(self.loss(self.net.params))
        if not math.isfinite(value):
            raise NonFiniteError("loss", f"value {value}")
        return value

    def estimate(self) -> float:
        if self.spec.side == "primal":
            return quick_estimate_primal(self.net, self.spec.material, self.spec.loading, self.grid, self.sample)
        return quick_estimate_dual(self.net, self.spec.material, self.spec.loading, self.grid, self.sample)


def _snapshot(trainers: Dict[str, _SideTrainer], nets: Dict[str, PeriodicNet], mesh: TriMesh,
              grid: CollocationGrid, material: cm.MaterialField, loading) -> BoundReport:
    """Quick estimates of both sides and guaranteed bounds of the current projections"""
    estimates = {}
    for side in SIDES:
        if side in trainers:
            estimates[side] = trainers[side].estimate()
        elif side == "primal":
            estimates[side] = quick_estimate_primal(nets[side], material, loading, grid)
        else:
            estimates[side] = quick_estimate_dual(nets[side], material, loading, grid)
    report = guaranteed_bounds(
        project_to_p1(nets["primal"], mesh),
        project_to_p1(nets["dual"], mesh),
        mesh,
        loading,
        loading,
        quick_primal=estimates["primal"],
        quick_dual=estimates["dual"],
    )
    return report


def train_primal_dual(
    nets: Dict[str, PeriodicNet],
    specs: Dict[str, LossSpec],
    config: TrainConfig,
    method: str = "pinn",
    echo: Optional[Dict] = None,
    out_dir: Optional[Path] = None,
) -> Tuple[Dict[str, PeriodicNet], RunRecord]:
    """
    Train the sides named in `specs` in lockstep

    Args:
        nets: initial primal and/or dual networks; a side without a spec keeps a zero
            network, whose bounds are the Voigt/Reuss averages
        specs: loss specification per trained side
        config: optimizer and logging settings
        method: label stored in the record
        echo: run configuration echoed into the record
        out_dir: where checkpoints go when checkpoint_every > 0

    Returns:
        Tuple of (trained networks per side, RunRecord)

    Raises:
        TrainingAborted: on a non-finite loss or gradient, with the last good parameters
    """
    if not specs:
        raise ValueError("Nothing to train: no loss specification given")
    if config.deterministic is not None:
        set_deterministic(config.deterministic)
    start = time.perf_counter()
    grid = CollocationGrid(config.grid_n)

    first = next(iter(specs.values()))
    material, loading = first.material, first.loading
    reference = material.reference()
    exact = cm.obnosov_effective(material.phases)
    mesh = build_mesh(config.grid_n, reference)

    nets = dict(nets)
    for side in SIDES:
        if side not in nets:
            template = nets[next(iter(specs))]
            nets[side] = zeros(template.config)
    trainers = {side: _SideTrainer(nets[side], spec, config, grid) for side, spec in specs.items()}

    record = RunRecord(
        method=method,
        config=dict(echo or {}),
        gram={side: t.gram.conditioning() for side, t in trainers.items() if t.gram is not None},
        metadata={
            "dual_estimate_convention": DUAL_CONVENTION,
            "trained_sides": [side for side in SIDES if side in trainers],
            "training_material": material.label(),
            "bounds_material": reference.label(),
            "grid_n": grid.n,
            "bounds_mesh_n": mesh.n,
            "exact_reference": exact,
            "train_config": asdict(config),
        },
        created_at=datetime.now().isoformat(timespec="seconds"),
    )
    logger.info(f"🚀 Training {method} ({', '.join(record.metadata['trained_sides'])}) for {config.epochs} epochs")

    epoch = 0
    try:
        for epoch in range(config.epochs):
            if epoch % config.log_every == 0:
                for side, trainer in trainers.items():
                    nets[side] = trainer.net
                report = _snapshot(trainers, nets, mesh, grid, material, loading)
            losses = {side: trainer.step() for side, trainer in trainers.items()}
            if epoch % config.log_every == 0:
                entry = {
                    "epoch": epoch,
                    "loss": sum(losses.values()),
                    "primal_loss": losses.get("primal"),
                    "dual_loss": losses.get("dual"),
                    **report.to_dict(),
                }
                record.history.append(entry)
                logger.info(
                    f"Epoch {epoch:>6d} | loss {entry['loss']:.3e} | primal {report.primal_estimate:.5f} | "
                    f"dual {report.dual_estimate:.5f} | gap {report.gap:.2%} | "
                    f"bounds [{report.lower_bound:.5f}, {report.upper_bound:.5f}]"
                )
            if config.checkpoint_every and out_dir is not None and (epoch + 1) % config.checkpoint_every == 0:
                for side, trainer in trainers.items():
                    save_params(trainer.net, Path(out_dir) / f"params_{side}_{epoch + 1}.bin")
    except NonFiniteError as exc:
        record.status = "aborted"
        record.error = f"epoch {epoch}: {exc}"
        record.wall_clock_seconds = time.perf_counter() - start
        logger.error(f"❌ Training aborted at epoch {epoch}: {exc}")
        raise TrainingAborted(str(exc), record, {side: t.net for side, t in trainers.items()}) from exc

    for side, trainer in trainers.items():
        nets[side] = trainer.net
    try:
        record.final_loss = {side: trainer.current_loss() for side, trainer in trainers.items()}
    except NonFiniteError as exc:
        record.status = "aborted"
        record.error = f"final evaluation: {exc}"
        raise TrainingAborted(str(exc), record, {side: t.net for side, t in trainers.items()}) from exc

    report = _snapshot(trainers, nets, mesh, grid, material, loading)
    record.final = report.to_dict(exact)
    if len(trainers) == 2:
        record.suspected_failure = bool(abs(report.gap) > config.failure_gap)
        if record.suspected_failure:
            logger.warning(
                f"⚠️ Suspected failure: primal-dual gap {report.gap:.2%} exceeds {config.failure_gap:.0%}"
            )
    record.wall_clock_seconds = time.perf_counter() - start
    logger.info(
        f"✅ Done: primal {report.primal_estimate:.5f}, dual {report.dual_estimate:.5f}, "
        f"bounds [{report.lower_bound:.5f}, {report.upper_bound:.5f}] (exact {exact:.5f})"
    )
    return nets, record


def train(net: PeriodicNet, loss_spec: LossSpec, config: TrainConfig, method: str = "pinn",
          echo: Optional[Dict] = None, out_dir: Optional[Path] = None) -> Tuple[PeriodicNet, RunRecord]:
    """Train a single network; the other side stays at the zero field"""
    nets, record = train_primal_dual({loss_spec.side: net}, {loss_spec.side: loss_spec}, config,
                                     method=method, echo=echo, out_dir=out_dir)
    return nets[loss_spec.side], record
