"""Physics-informed loss: residual and initial-condition terms and their weighting.

For a system ``du_i/dt = rhs_i(t, u)`` and an ensemble output ``u(t)``:

* residual term, one per equation:
  ``L_f[i] = sum_k w_k * (rhs_i(t_k, u(t_k)) - du_i/dt(t_k))**2``
  over the interior collocation points ``t_k`` with quadrature weights ``w_k``
  (the grid spacing, or ``(t1 - t0)/N`` for random points);
* initial-condition term, one per state:
  ``L_b[j] = (u_j(t0) - u_j0)**2``;
* total: ``sum_i wf[i] * L_f[i] + sum_j wb[j] * L_b[j]``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .expr import OdeSystem, diff, evaluate_array, Constant
from .net import NetworkEnsemble, forward_with_time_derivative

__all__ = [
    "SamplingPlan", "grid_plan", "monte_carlo_plan", "AdaptiveConfig",
    "LossAssembly", "LossBreakdown", "residual_loss", "boundary_loss",
    "total_loss", "adaptive_update", "AS_PRINTED", "TRAPEZOID",
]

log = logging.getLogger(__name__)

AS_PRINTED = "as-printed"
TRAPEZOID = "trapezoid"


@dataclass(frozen=True)
class SamplingPlan:
    """Interior collocation points with quadrature weights, plus the boundary time."""

    kind: str
    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    t0: float
    t1: float
    dt: float | None = None
    count: int | None = None
    seed: int | None = None
    quadrature: str = AS_PRINTED

    def __post_init__(self):
        if len(self.points) == 0:
            raise ValueError("sampling plan has no points")
        if len(self.points) != len(self.weights):
            raise ValueError("points and weights differ in length")

    @property
    def alpha(self) -> float | None:
        return None if self.count is None else (self.t1 - self.t0) / self.count


def grid_plan(t0: float, t1: float, dt: float = 0.01, quadrature: str = AS_PRINTED) -> SamplingPlan:
    """Uniform points ``t0 + dt, t0 + 2 dt, ... <= t1``, each weighted by ``dt``.

    With ``quadrature="trapezoid"`` the point ``t0`` is added and the two end
    points get half weight.
    """
    if not dt > 0:
        raise ValueError(f"grid spacing must be positive, got {dt}")
    n = int(math.floor((t1 - t0) / dt + 1e-9))
    if n < 1:
        raise ValueError(f"grid spacing {dt} exceeds the domain [{t0}, {t1}]")
    points = t0 + dt * np.arange(1, n + 1)
    weights = np.full(n, float(dt))
    if quadrature == TRAPEZOID:
        points = np.concatenate([[t0], points])
        weights = np.concatenate([[dt / 2.0], weights])
        if abs(points[-1] - t1) <= 1e-9 * max(1.0, abs(t1)):
            weights[-1] = dt / 2.0
    elif quadrature != AS_PRINTED:
        raise ValueError(f"unknown quadrature {quadrature!r}")
    return SamplingPlan("grid", points, weights, float(t0), float(t1), dt=float(dt), quadrature=quadrature)


def monte_carlo_plan(t0: float, t1: float, count: int, seed: int = 0) -> SamplingPlan:
    """``count`` uniform draws from ``(t0, t1]``, each weighted by ``(t1 - t0)/count``."""
    if count < 1:
        raise ValueError("need at least one Monte-Carlo point")
    rng = np.random.default_rng(seed)
    points = t1 - (t1 - t0) * rng.random(count)
    weights = np.full(count, (t1 - t0) / count)
    return SamplingPlan("monte-carlo", points, weights, float(t0), float(t1), count=int(count), seed=seed)


# ---------------------------------------------------------------------------


def _jacobian(system: OdeSystem):
    # partials[i] lists (state index, d rhs_i / d state) for the nonzero ones
    out = []
    for s in system.states:
        row = []
        for k, v in enumerate(system.states):
            d = diff(system.rhs[s], v)
            if not (isinstance(d, Constant) and d.value == 0.0):
                row.append((k, d))
        out.append(row)
    return out


def _rhs_node(expr, partials, u: Var, names, t, params):
    n = len(t)
    cols = {name: u.value[:, k] for k, name in enumerate(names)}
    value = np.broadcast_to(evaluate_array(expr, t, cols, params), (n,)).astype(float)

    def vjp(g):
        out = np.zeros_like(u.value)
        for k, d in partials:
            out[:, k] = g * evaluate_array(d, t, cols, params)
        return out
    return Var(value, [(u, vjp)])


def _terms(system, ens, theta, plan, jacobian=None):
    """Per-equation residual and per-state boundary terms.

    Returns tape variables when ``theta`` is a `Var`, floats otherwise.
    """
    if ens.n_outputs != system.dim:
        raise ValueError(f"ensemble has {ens.n_outputs} outputs, system has {system.dim} states")
    t = np.concatenate([[system.t0], plan.points])
    u, du = forward_with_time_derivative(ens, t, theta)
    init = system.initial_vector()
    taped = isinstance(u, Var)
    residual, boundary = [], []
    if taped:
        jacobian = jacobian or _jacobian(system)
        u_in, du_in = u[1:], du[1:]
        for i, s in enumerate(system.states):
            r = _rhs_node(system.rhs[s], jacobian[i], u_in, system.states, t[1:], system.params) - du_in[:, i]
            residual.append((r * r).dot(plan.weights))
        u0 = u[0]
        for j in range(system.dim):
            e = u0[j] - init[j]
            boundary.append(e * e)
    else:
        cols = {name: u[1:, k] for k, name in enumerate(system.states)}
        for i, s in enumerate(system.states):
            r = evaluate_array(system.rhs[s], t[1:], cols, system.params) - du[1:, i]
            residual.append(float(np.dot(r * r, plan.weights)))
        boundary = [float(e * e) for e in (u[0] - init)]
    return residual, boundary


def residual_loss(system: OdeSystem, ens: NetworkEnsemble, theta, plan: SamplingPlan):
    return _terms(system, ens, theta, plan)[0]


def boundary_loss(system: OdeSystem, ens: NetworkEnsemble, theta):
    plan = SamplingPlan("boundary", np.array([system.t0]), np.zeros(1), system.t0, system.t1)
    return _terms(system, ens, theta, plan)[1]


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdaptiveConfig:
    enabled: bool = False
    period: int = 10
    gamma: float = 0.9
    # "sum": numerator from the gradient of all residual terms together;
    # "matched": from the residual of the equation for the same state
    pairing: str = "sum"

    def __post_init__(self):
        if self.period < 1:
            raise ValueError("adaptive period must be >= 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.pairing not in ("sum", "matched"):
            raise ValueError(f"unknown pairing {self.pairing!r}")


@dataclass
class LossBreakdown:
    total: float
    residual: np.ndarray
    boundary: np.ndarray
    residual_weights: np.ndarray
    boundary_weights: np.ndarray

    def as_dict(self, names):
        out = {"total": self.total}
        for i, n in enumerate(names):
            out[f"residual[{n}]"] = float(self.residual[i])
            out[f"w_residual[{n}]"] = float(self.residual_weights[i])
        for j, n in enumerate(names):
            out[f"boundary[{n}]"] = float(self.boundary[j])
            out[f"w_boundary[{n}]"] = float(self.boundary_weights[j])
        return out


class LossAssembly:
    """Weighted residual + initial-condition loss for one system and ensemble layout.

    Weights are mutable state; everything else is fixed at construction.
    """

    def __init__(self, system: OdeSystem, ensemble: NetworkEnsemble, plan: SamplingPlan,
                 adaptive: AdaptiveConfig | None = None, residual_weights=None, boundary_weights=None):
        self.system = system
        self.ensemble = ensemble
        self.plan = plan
        self.adaptive = adaptive or AdaptiveConfig()
        n = system.dim
        self.residual_weights = np.ones(n) if residual_weights is None else np.array(residual_weights, dtype=float)
        self.boundary_weights = np.ones(n) if boundary_weights is None else np.array(boundary_weights, dtype=float)
        if np.any(self.residual_weights <= 0) or np.any(self.boundary_weights <= 0):
            raise ValueError("loss weights must be positive")
        self._jacobian = _jacobian(system)

    def terms(self, theta):
        return _terms(self.system, self.ensemble, theta, self.plan, self._jacobian)

    def weighted_total(self, residual, boundary):
        """``sum(wf * residual) + sum(wb * boundary)`` in a fixed order."""
        total = 0.0
        for w, term in zip(self.residual_weights, residual):
            total = term * w + total
        for w, term in zip(self.boundary_weights, boundary):
            total = term * w + total
        return total

    def value(self, theta) -> float:
        return float(self.weighted_total(*self.terms(np.asarray(theta, dtype=float))))

    def value_and_grad(self, theta):
        leaf = Var(np.array(theta, dtype=float))
        total = self.weighted_total(*self.terms(leaf))
        (g,) = ad.grad(total, leaf)
        return float(total.value), g

    def breakdown(self, theta) -> LossBreakdown:
        residual, boundary = self.terms(np.asarray(theta, dtype=float))
        return LossBreakdown(float(self.weighted_total(residual, boundary)), np.array(residual), np.array(boundary),
                             self.residual_weights.copy(), self.boundary_weights.copy())

    def term_gradients(self, theta):
        """Gradients of each residual term and each boundary term at ``theta``."""
        leaf = Var(np.array(theta, dtype=float))
        residual, boundary = self.terms(leaf)
        gf = [ad.grad(term, leaf)[0] for term in residual]
        gb = [ad.grad(term, leaf)[0] for term in boundary]
        return gf, gb

    def adapt(self, theta) -> bool:
        """Recompute the boundary weights at ``theta``; True when any weight changed."""
        gf, gb = self.term_gradients(theta)
        if self.adaptive.pairing == "sum":
            numer = [np.sum(gf, axis=0)] * len(gb)
        else:
            numer = gf
        old = self.boundary_weights.copy()
        self.boundary_weights = adaptive_update(old, numer, gb, self.adaptive.gamma)
        return not np.array_equal(old, self.boundary_weights)


def total_loss(assembly: LossAssembly, theta):
    """Weighted total and its per-term breakdown."""
    b = assembly.breakdown(theta)
    return b.total, b


def adaptive_update(weights, residual_grads, boundary_grads, gamma: float = 0.9) -> np.ndarray:
    """Moving-average update of boundary weights from gradient magnitudes.

    For each boundary term ``j``::

        w_hat = max|grad residual| / mean|grad L_b[j]|
        w_j  <- (1 - gamma) * w_j + gamma * w_hat

    ``residual_grads`` is either one gradient (shared by every boundary term)
    or one per boundary term.  A boundary term whose gradient is identically
    zero keeps its weight.
    """
    weights = np.array(weights, dtype=float)
    if isinstance(residual_grads, np.ndarray) and residual_grads.ndim == 1:
        residual_grads = [residual_grads] * len(weights)
    if len(residual_grads) != len(weights) or len(boundary_grads) != len(weights):
        raise ValueError("need one gradient pair per boundary weight")
    for j, (gf, gb) in enumerate(zip(residual_grads, boundary_grads)):
        mean_b = float(np.mean(np.abs(gb)))
        if mean_b == 0.0 or not np.isfinite(mean_b):
            log.info("boundary term %d has a zero gradient; weight kept at %g", j, weights[j])
            continue
        w_hat = float(np.max(np.abs(gf))) / mean_b
        updated = (1.0 - gamma) * weights[j] + gamma * w_hat
        if updated > 0.0 and np.isfinite(updated):
            weights[j] = updated
    return weights
