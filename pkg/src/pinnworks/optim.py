"""Dense BFGS with a strong-Wolfe line search.

The objective is a closure ``fun(theta) -> (loss, gradient)``.  A per-iteration
callback may change the objective (adaptive loss weights); it signals this by
returning True, after which the loss and gradient are re-evaluated.  The
inverse-Hessian approximation is kept across such changes unless
``reset_on_change`` is set; the curvature safeguard keeps it positive
definite either way.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .net import LayoutError, NetworkEnsemble

__all__ = [
    "BFGSConfig", "TrainReport", "OptimizerState", "LineSearchError",
    "minimize", "strong_wolfe", "warm_start",
    "CONVERGED_GRADIENT", "CONVERGED_LOSS_DELTA", "MAX_ITERATIONS",
    "LINE_SEARCH_FAILURE", "REACHED_TARGET",
]

log = logging.getLogger(__name__)

CONVERGED_GRADIENT = "converged-gradient"
CONVERGED_LOSS_DELTA = "converged-loss-delta"
MAX_ITERATIONS = "max-iterations"
LINE_SEARCH_FAILURE = "line-search-failure"
REACHED_TARGET = "reached-loss-target"


@dataclass(frozen=True)
class BFGSConfig:
    max_iter: int = 50_000
    gtol: float = 1e-8
    # relative change in loss between accepted iterates; 0 disables
    ftol: float = 0.0
    loss_target: float | None = None
    c1: float = 1e-4
    c2: float = 0.9
    max_line_search: int = 50
    # None selects dense BFGS; an integer selects L-BFGS with that history length
    memory: int | None = None
    # restart from the identity when the callback reports a changed objective;
    # off by default because adaptive weights change every few iterations and
    # repeated restarts reduce BFGS to scaled gradient descent
    reset_on_change: bool = False

    def __post_init__(self):
        if not 0.0 < self.c1 < self.c2 < 1.0:
            raise ValueError("need 0 < c1 < c2 < 1")
        if self.max_iter < 0 or self.max_line_search < 1:
            raise ValueError("iteration limits must be positive")


@dataclass
class OptimizerState:
    """Snapshot handed to the per-iteration callback.  ``H`` is None for L-BFGS."""

    iteration: int
    theta: np.ndarray
    loss: float
    grad: np.ndarray
    H: np.ndarray | None
    evaluations: int


@dataclass
class TrainReport:
    theta: np.ndarray
    losses: list[float]
    stop_reason: str
    iterations: int
    evaluations: int
    seconds: float
    weight_history: list = field(default_factory=list)
    objective_changes: list[int] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.losses[-1]

    def iterations_to(self, threshold: float) -> int | None:
        """First iteration whose recorded loss is <= ``threshold``."""
        for i, value in enumerate(self.losses):
            if value <= threshold:
                return i
        return None


class LineSearchError(RuntimeError):
    pass


def _cubic_min(a, fa, da, b, fb, db):
    # minimiser of the cubic interpolating (a, fa, da), (b, fb, db); None if undefined
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    rad = d1 * d1 - da * db
    if rad < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(rad)
    denom = db - da + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (db + d2 - d1) / denom


def strong_wolfe(phi, f0, d0, alpha0=1.0, c1=1e-4, c2=0.9, max_evals=50, alpha_max=1e10):
    """Step length satisfying the strong Wolfe conditions.

    ``phi(alpha)`` returns ``(f, dphi, payload)``; the payload of the accepted
    step is passed back so callers avoid re-evaluating.  Raises
    `LineSearchError` when no acceptable step is found in ``max_evals``
    evaluations.
    """
    if not d0 < 0:
        raise LineSearchError("not a descent direction")
    evals = 0

    def sufficient(a, f):
        return f <= f0 + c1 * a * d0

    def zoom(lo, f_lo, d_lo, p_lo, hi, f_hi, d_hi):
        nonlocal evals
        while evals < max_evals:
            a = None
            if np.isfinite(f_hi) and np.isfinite(d_hi):
                a = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
            width = abs(hi - lo)
            if a is None or not np.isfinite(a) or min(abs(a - lo), abs(a - hi)) < 0.1 * width:
                a = 0.5 * (lo + hi)
            f, d, payload = phi(a)
            evals += 1
            if not sufficient(a, f) or f >= f_lo:
                hi, f_hi, d_hi = a, f, d
            else:
                if abs(d) <= -c2 * d0:
                    return a, f, payload, evals
                if d * (hi - lo) >= 0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo, p_lo = a, f, d, payload
            if abs(hi - lo) <= 1e-12 * max(1.0, abs(lo)):
                break
        # The bracket collapsed or the budget ran out, usually because loss
        # differences have reached rounding level.  A step that already gave
        # sufficient decrease is still progress, so take it.
        if lo > 0 and f_lo < f0:
            return lo, f_lo, p_lo, evals
        raise LineSearchError(f"zoom failed after {evals} evaluations")

    a_prev, f_prev, d_prev, p_prev = 0.0, f0, d0, None
    a = alpha0
    while evals < max_evals:
        f, d, payload = phi(a)
        evals += 1
        if not sufficient(a, f) or (evals > 1 and f >= f_prev):
            return zoom(a_prev, f_prev, d_prev, p_prev, a, f, d)
        if abs(d) <= -c2 * d0:
            return a, f, payload, evals
        if d >= 0:
            return zoom(a, f, d, payload, a_prev, f_prev, d_prev)
        a_prev, f_prev, d_prev, p_prev = a, f, d, payload
        a = min(4.0 * a, alpha_max)
    raise LineSearchError(f"no acceptable step after {evals} evaluations")


def _lbfgs_direction(g, pairs):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * s.dot(q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= s.dot(y) / y.dot(y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * y.dot(q)
        q += (a - b) * s
    return -q


def minimize(fun, theta0, config: BFGSConfig = BFGSConfig(), callback=None) -> TrainReport:
    """Minimise ``fun`` from ``theta0``.

    ``callback(state)`` receives an `OptimizerState` after every accepted
    step; a truthy return means the objective changed.
    """
    start = time.perf_counter()
    x = np.array(theta0, dtype=float)
    f, g = fun(x)
    evaluations = 1
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise FloatingPointError("non-finite loss or gradient at the starting point")
    n = x.size
    dense = config.memory is None
    H = np.eye(n) if dense else None
    pairs: list = []
    fresh = True  # H is the unscaled identity
    losses = [float(f)]
    changes: list[int] = []
    reason = MAX_ITERATIONS
    it = 0

    def done():
        return TrainReport(x, losses, reason, it, evaluations, time.perf_counter() - start,
                           objective_changes=changes)

    while True:
        if np.max(np.abs(g)) <= config.gtol:
            reason = CONVERGED_GRADIENT
            return done()
        if config.loss_target is not None and f <= config.loss_target:
            reason = REACHED_TARGET
            return done()
        if it >= config.max_iter:
            reason = MAX_ITERATIONS
            return done()

        p = -(H @ g) if dense else _lbfgs_direction(g, pairs)
        slope = float(g.dot(p))
        if not slope < 0:
            H, pairs, fresh = (np.eye(n) if dense else None), [], True
            p = -g
            slope = float(g.dot(p))
        alpha0 = min(1.0, 1.0 / max(np.max(np.abs(g)), 1e-300)) if fresh else 1.0

        def phi(a):
            xa = x + a * p
            fa, ga = fun(xa)
            if not np.isfinite(fa) or not np.all(np.isfinite(ga)):
                return np.inf, np.inf, (xa, fa, ga)
            return fa, float(ga.dot(p)), (xa, fa, ga)

        try:
            _, _, (x_new, f_new, g_new), used = strong_wolfe(
                phi, f, slope, alpha0, config.c1, config.c2, config.max_line_search)
        except LineSearchError as exc:
            evaluations += config.max_line_search
            if fresh:
                log.info("line search failed at iteration %d: %s", it, exc)
                reason = LINE_SEARCH_FAILURE
                return done()
            log.debug("line search failed at iteration %d, restarting from identity", it)
            H, pairs, fresh = (np.eye(n) if dense else None), [], True
            continue
        evaluations += used

        s = x_new - x
        y = g_new - g
        sy = float(s.dot(y))
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            rho = 1.0 / sy
            if dense:
                if fresh:
                    H *= sy / float(y.dot(y))
                Hy = H @ y
                yHy = float(y.dot(Hy))
                # H - rho (Hy s' + s Hy') + (rho^2 yHy + rho) s s'  ==  H + s u' + u s'
                u = (0.5 * (rho * rho * yHy + rho)) * s - rho * Hy
                M = np.outer(s, u)
                H += M
                H += M.T
            else:
                pairs.append((s, y, rho))
                if len(pairs) > config.memory:
                    pairs.pop(0)
            fresh = False

        f_old = f
        x, f, g = x_new, f_new, g_new
        it += 1
        losses.append(float(f))

        if config.ftol > 0 and abs(f_old - f) <= config.ftol * max(abs(f_old), abs(f), 1.0):
            reason = CONVERGED_LOSS_DELTA
            return done()

        if callback is not None and callback(OptimizerState(it, x, f, g, H, evaluations)):
            f, g = fun(x)
            evaluations += 1
            changes.append(it)
            if config.reset_on_change:
                H, pairs, fresh = (np.eye(n) if dense else None), [], True


def warm_start(previous: NetworkEnsemble, target: NetworkEnsemble) -> np.ndarray:
    """Initial parameters for ``target`` taken from a trained ``previous``."""
    if previous.mode != target.mode or [m.dims for m in previous.members] != [m.dims for m in target.members]:
        raise LayoutError(f"checkpoint layout {previous.layout()} does not match {target.layout()}")
    return np.array(previous.theta, dtype=float)
