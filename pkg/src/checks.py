"""
Checks - Property suite run by `python -m src.cli check`

Every check is small enough for a laptop run except the FEM benchmark at fem_n.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List

import numpy as np
import torch

from src import cell_material as cm
from src.autodiff import DTYPE, param_gradient
from src.bounds import guaranteed_bounds, project_to_p1, p1_bounds
from src.config import RunConfig
from src.fem import assemble_dual, assemble_primal, build_mesh, fem_bounds, run_benchmark, solve, solve_dense, system_energy
from src.losses import gram_weighted_loss, strong_dual_loss, strong_primal_loss, weak_residual_dual, weak_residual_primal
from src.network import NetworkConfig, forward, init, values, zeros
from src.quadrature import CollocationGrid
from src.weak_bases import build_network_basis, build_spectral, numeric_gram, recombine, spectral_gram

logger = logging.getLogger(__name__)

LOADING = (1.0, 0.0)
SMALL_NET = NetworkConfig(4, 4, 1)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def _points(count: int, seed: int) -> torch.Tensor:
    gen = torch.Generator().manual_seed(seed)
    return torch.rand(count, 2, generator=gen, dtype=DTYPE) * cm.TWO_PI


def check_jet_derivatives(config: RunConfig) -> CheckResult:
    net = init(SMALL_NET, config.seed)
    x = _points(config.check_samples, config.seed)
    jet = forward(net, x)
    h = 1e-5
    worst = 0.0
    for axis in range(2):
        step = torch.zeros(2, dtype=DTYPE)
        step[axis] = h
        fd_grad = (values(net, x + step) - values(net, x - step)) / (2 * h)
        with torch.no_grad():
            fd_hess = (forward(net, x + step).grad - forward(net, x - step).grad) / (2 * h)
        worst = max(worst, float((jet.grad[:, axis] - fd_grad).abs().max()))
        worst = max(worst, float((jet.hess[:, :, axis] - fd_hess).abs().max()))
    return CheckResult("spatial jets match finite differences", worst < 1e-6, f"max deviation {worst:.2e}")


def check_periodicity(config: RunConfig) -> CheckResult:
    net = init(config.network_config(), config.seed)
    x = _points(config.check_samples, config.seed + 1)
    base = values(net, x)
    worst = 0.0
    for shift in ([cm.TWO_PI, 0.0], [0.0, cm.TWO_PI], [-cm.TWO_PI, cm.TWO_PI]):
        worst = max(worst, float((values(net, x + torch.tensor(shift, dtype=DTYPE)) - base).abs().max()))
    return CheckResult("network output is 2π-periodic", worst < 1e-12, f"max deviation {worst:.2e}")


def check_parameter_gradient(config: RunConfig) -> CheckResult:
    material = cm.smoothed(0.5, config.gamma_mat, config.gamma_inc)
    grid = CollocationGrid(8)
    basis = build_spectral(2, 2)
    gram = spectral_gram(basis)
    net = init(SMALL_NET, config.seed)
    losses = {
        "strong primal": lambda n: strong_primal_loss(n, material, LOADING, grid),
        "strong dual": lambda n: strong_dual_loss(n, material, LOADING, grid),
        "weak primal": lambda n: gram_weighted_loss(weak_residual_primal(n, material, LOADING, basis, grid), gram),
        "weak dual": lambda n: gram_weighted_loss(weak_residual_dual(n, material, LOADING, basis, grid), gram),
    }
    h = 1e-6
    worst, worst_name = 0.0, ""
    for name, loss in losses.items():
        def loss_fn(theta):
            return loss(net.with_params(theta))

        grad = param_gradient(loss_fn, net.params)
        with torch.no_grad():
            scale = max(1.0, abs(float(loss_fn(net.params))))
        for k in range(0, net.size, max(1, net.size // 8)):
            step = torch.zeros(net.size, dtype=DTYPE)
            step[k] = h
            with torch.no_grad():
                fd = (float(loss_fn(net.params + step)) - float(loss_fn(net.params - step))) / (2 * h)
            excess = abs(float(grad[k]) - fd) - 1e-5 * abs(fd) - 1e-8 * scale
            if excess > worst:
                worst, worst_name = excess, name
    detail = f"max excess deviation {worst:.2e}" + (f" ({worst_name})" if worst_name else "")
    return CheckResult("parameter gradients of all four losses match finite differences", worst <= 0.0, detail)


def check_gram_invariance(config: RunConfig) -> CheckResult:
    grid = CollocationGrid(config.check_grid_n)
    basis = build_network_basis(SMALL_NET, 10, config.seed + 1000)
    gen = torch.Generator().manual_seed(config.seed)
    orthogonal, _ = torch.linalg.qr(torch.randn(10, 10, generator=gen, dtype=DTYPE))
    mixed = recombine(basis, orthogonal @ torch.diag(torch.linspace(1.0, 2.0, 10, dtype=DTYPE)), grid)
    material = cm.piecewise(config.gamma_mat, config.gamma_inc)
    net = init(SMALL_NET, config.seed)
    with torch.no_grad():
        before = float(gram_weighted_loss(weak_residual_primal(net, material, LOADING, basis, grid),
                                          numeric_gram(basis, grid)))
        after = float(gram_weighted_loss(weak_residual_primal(net, material, LOADING, mixed, grid),
                                         numeric_gram(mixed, grid)))
    rel = abs(after - before) / abs(before)
    return CheckResult("Gram-weighted loss is invariant under basis recombination", rel <= 1e-8,
                       f"relative change {rel:.2e}")


def check_fem_oracle(config: RunConfig) -> CheckResult:
    mesh = build_mesh(8, cm.piecewise(config.gamma_mat, config.gamma_inc))
    worst = 0.0
    for system in (assemble_primal(mesh, LOADING), assemble_dual(mesh, LOADING)):
        worst = max(worst, float(np.abs(solve(system, rtol=1e-13) - solve_dense(system)).max()))
    return CheckResult("CG matches dense solve on n=8", worst <= 1e-10, f"max DoF deviation {worst:.2e}")


def check_fem_refinement(config: RunConfig) -> CheckResult:
    material = cm.piecewise(config.gamma_mat, config.gamma_inc)
    exact = cm.obnosov_effective(material.phases)
    gaps, problems = [], []
    for n in (8, 16, 32):
        mesh = build_mesh(n, material)
        primal_system = assemble_primal(mesh, LOADING)
        u = solve(primal_system)
        w = solve(assemble_dual(mesh, LOADING))
        report = fem_bounds(mesh, u, w, LOADING, LOADING)
        if not report.lower_bound <= exact <= report.upper_bound:
            problems.append(f"n={n}: [{report.lower_bound:.6f}, {report.upper_bound:.6f}] misses {exact:.6f}")
        energy = system_energy(primal_system, u)
        if abs(energy - report.upper_bound) > 1e-10 * report.upper_bound:
            problems.append(f"n={n}: energy identity off by {abs(energy - report.upper_bound):.2e}")
        gaps.append(report.upper_bound - report.lower_bound)
    if any(b > a for a, b in zip(gaps, gaps[1:])):
        problems.append(f"bound gap not shrinking: {gaps}")
    return CheckResult("FEM bounds bracket the exact value under refinement", not problems,
                       "; ".join(problems) or f"gaps {', '.join(f'{g:.4f}' for g in gaps)}")


def check_random_net_bounds(config: RunConfig) -> CheckResult:
    material = cm.piecewise(config.gamma_mat, config.gamma_inc)
    exact = cm.obnosov_effective(material.phases)
    mesh = build_mesh(config.check_grid_n, material)
    net_config = config.network_config()
    misses = 0
    for k in range(config.check_samples):
        u = project_to_p1(init(net_config, config.seed + 2 * k), mesh)
        w = project_to_p1(init(net_config, config.seed + 2 * k + 1), mesh)
        report = guaranteed_bounds(u, w, mesh, LOADING, LOADING)
        if not report.lower_bound - 1e-12 <= exact <= report.upper_bound + 1e-12:
            misses += 1
    return CheckResult("guaranteed bounds hold for random networks", misses == 0,
                       f"{config.check_samples - misses}/{config.check_samples} bracket {exact:.6f}")


def check_zero_fields(config: RunConfig) -> CheckResult:
    material = cm.piecewise(config.gamma_mat, config.gamma_inc)
    mesh = build_mesh(config.check_grid_n, material)
    zero = np.zeros(mesh.n_dofs)
    report = p1_bounds(mesh, zero, zero, LOADING, LOADING)
    voigt, reuss = cm.voigt_reuss(material.phases)
    ok = abs(report.upper_bound - voigt) < 1e-12 and abs(report.lower_bound - reuss) < 1e-12
    return CheckResult("zero fields give the Voigt/Reuss averages", ok,
                       f"({report.upper_bound:.6f}, {report.lower_bound:.6f}) vs ({voigt:.6f}, {reuss:.6f})")


def check_constant_shift(config: RunConfig) -> CheckResult:
    material = cm.piecewise(config.gamma_mat, config.gamma_inc)
    mesh = build_mesh(config.check_grid_n, material)
    net_u, net_w = init(SMALL_NET, config.seed), init(SMALL_NET, config.seed + 1)
    shift = torch.zeros(net_u.size, dtype=DTYPE)
    shift[-1] = 3.5  # output bias
    shifted_u = net_u.with_params(net_u.params + shift)
    a = guaranteed_bounds(project_to_p1(net_u, mesh), project_to_p1(net_w, mesh), mesh, LOADING, LOADING)
    b = guaranteed_bounds(project_to_p1(shifted_u, mesh), project_to_p1(net_w, mesh), mesh, LOADING, LOADING)
    delta = abs(a.upper_bound - b.upper_bound)
    return CheckResult("bounds ignore constant shifts of the output", delta < 1e-10, f"upper bound change {delta:.2e}")


def check_spectral_gram(config: RunConfig) -> CheckResult:
    basis = build_spectral(2, 2)
    grid = CollocationGrid(config.check_grid_n)
    gram = numeric_gram(basis, grid)
    expected = torch.diag(2.0 * np.pi ** 2 * (basis._freq ** 2).sum(dim=-1))
    deviation = float((gram.matrix - expected).abs().max())
    return CheckResult("numeric spectral Gram is 2π²(m²+n²) on the diagonal", deviation < 1e-9,
                       f"max deviation {deviation:.2e}; smallest eigenvalue {gram.smallest_eigenvalue:.3e}")


def check_homogeneous_residual(config: RunConfig) -> CheckResult:
    material = cm.piecewise(config.gamma_mat, config.gamma_mat)
    grid = CollocationGrid(config.check_grid_n)
    with torch.no_grad():
        residual = weak_residual_primal(zeros(SMALL_NET), material, LOADING, build_spectral(3, 3), grid)
    worst = float(residual.abs().max())
    return CheckResult("weak residual vanishes for a homogeneous cell", worst < 1e-10, f"max |r| {worst:.2e}")


def check_fem_benchmark(config: RunConfig) -> CheckResult:
    material = cm.piecewise(config.gamma_mat, config.gamma_inc)
    exact = cm.obnosov_effective(material.phases)
    result = run_benchmark(config.fem_n, material, LOADING, rtol=config.fem_rtol, max_iter=config.fem_max_iter)
    errors = result.report.relative_errors(exact)
    ok = abs(errors["upper_bound"]) <= 0.04 and abs(errors["lower_bound"]) <= 0.04
    return CheckResult(f"FEM n={config.fem_n} bounds within 0.04% of exact", ok,
                       f"upper {errors['upper_bound']:+.4f}%, lower {errors['lower_bound']:+.4f}%")


CHECKS: List[Callable[[RunConfig], CheckResult]] = [
    check_jet_derivatives,
    check_periodicity,
    check_parameter_gradient,
    check_fem_oracle,
    check_fem_refinement,
    check_random_net_bounds,
    check_zero_fields,
    check_constant_shift,
    check_spectral_gram,
    check_gram_invariance,
    check_homogeneous_residual,
    check_fem_benchmark,
]


def run_checks(config: RunConfig, include_benchmark: bool = True) -> List[CheckResult]:
    """Run the suite; a check that raises is reported as failed"""
    results = []
    for check in CHECKS:
        if check is check_fem_benchmark and not include_benchmark:
            continue
        try:
            result = check(config)
        except Exception as e:
            result = CheckResult(check.__name__, False, f"raised {type(e).__name__}: {e}")
        logger.info(f"{'✅' if result.passed else '❌'} {result.name}")
        results.append(result)
    return results
