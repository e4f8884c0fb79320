"""Glue between the loss, the networks and the optimizer."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .expr import OdeSystem
from .loss import AS_PRINTED, AdaptiveConfig, LossAssembly, grid_plan, monte_carlo_plan
from .net import SYMBOLIC, NetworkEnsemble, forward, init_ensemble
from .odeint import PINN, Trajectory, output_grid
from .optim import BFGSConfig, TrainReport, minimize, warm_start

__all__ = ["TrainConfig", "TrainResult", "build", "train", "pinn_trajectory"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    mode: str = SYMBOLIC
    hidden: tuple[int, ...] | None = None
    sampler: str = "grid"
    dt: float = 0.01
    mc_count: int = 1000
    quadrature: str = AS_PRINTED
    max_iter: int = 50_000
    gtol: float = 1e-8
    ftol: float = 0.0
    loss_target: float | None = None
    memory: int | None = None
    reset_on_change: bool = False
    adaptive: bool = False
    period: int = 10
    gamma: float = 0.9
    pairing: str = "sum"
    seed: int = 0
    scale_input: bool = True

    def bfgs(self) -> BFGSConfig:
        return BFGSConfig(max_iter=self.max_iter, gtol=self.gtol, ftol=self.ftol,
                          loss_target=self.loss_target, memory=self.memory,
                          reset_on_change=self.reset_on_change)

    def adaptive_config(self) -> AdaptiveConfig:
        return AdaptiveConfig(self.adaptive, self.period, self.gamma, self.pairing)


@dataclass
class TrainResult:
    ensemble: NetworkEnsemble
    report: TrainReport
    assembly: LossAssembly
    unit_loss: float = field(default=float("nan"))

    @property
    def theta(self):
        return self.ensemble.theta


def build(system: OdeSystem, config: TrainConfig, previous: NetworkEnsemble | None = None):
    """Fresh ensemble (warm-started from ``previous`` if given) and its loss assembly."""
    domain = (system.t0, system.t1) if config.scale_input else None
    ens = init_ensemble(config.mode, system.dim, config.hidden, config.seed, domain)
    if previous is not None:
        ens = ens.with_theta(warm_start(previous, ens))
    if config.sampler == "grid":
        plan = grid_plan(system.t0, system.t1, config.dt, config.quadrature)
    elif config.sampler == "monte-carlo":
        plan = monte_carlo_plan(system.t0, system.t1, config.mc_count, config.seed)
    else:
        raise ValueError(f"unknown sampler {config.sampler!r}")
    return ens, LossAssembly(system, ens, plan, config.adaptive_config())


def train(system: OdeSystem, config: TrainConfig, previous: NetworkEnsemble | None = None,
          on_iteration=None) -> TrainResult:
    """Minimise the physics-informed loss for ``system``.

    With adaptive weighting on, the boundary weights are recomputed every
    ``config.period`` iterations; the optimizer restarts its curvature
    estimate after a change only if ``config.reset_on_change`` is set.
    """
    ens, assembly = build(system, config, previous)
    weights = [(0, assembly.boundary_weights.tolist())]

    def callback(state):
        if on_iteration is not None:
            on_iteration(state)
        if assembly.adaptive.enabled and state.iteration % assembly.adaptive.period == 0:
            if assembly.adapt(state.theta):
                weights.append((state.iteration, assembly.boundary_weights.tolist()))
                return True
        return False

    report = minimize(assembly.value_and_grad, ens.theta, config.bfgs(), callback)
    report.weight_history = weights
    trained = ens.with_theta(report.theta)
    unit = LossAssembly(system, trained, assembly.plan).value(report.theta)
    return TrainResult(trained, report, assembly, unit)


def pinn_trajectory(ens: NetworkEnsemble, system: OdeSystem, dt: float = 0.01) -> Trajectory:
    """Network outputs sampled on the uniform grid over the system's domain."""
    grid = output_grid(system.t0, system.t1, dt)
    return Trajectory(grid, forward(ens, grid), system.states, PINN)
