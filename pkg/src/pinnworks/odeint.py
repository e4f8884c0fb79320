"""Reference integrators: classic RK4 and the Dormand-Prince 5(4) pair."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .expr import OdeSystem, compile_rhs

__all__ = [
    "Trajectory", "IntegrationError", "integrate_fixed", "integrate_adaptive",
    "output_grid", "REFERENCE_FIXED", "REFERENCE_ADAPTIVE", "PINN",
]

REFERENCE_FIXED = "reference-fixed"
REFERENCE_ADAPTIVE = "reference-adaptive"
PINN = "pinn"


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (len(times), len(names))
    names: tuple[str, ...]
    provenance: str
    info: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float).reshape(len(times), -1)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "names", tuple(self.names))
        if states.shape[1] != len(self.names):
            raise ValueError(f"{states.shape[1]} state columns for {len(self.names)} names")
        if len(times) > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("time stamps must be strictly increasing")
        if not np.all(np.isfinite(states)):
            raise ValueError("trajectory contains non-finite values")

    def __len__(self):
        return len(self.times)

    def column(self, name: str) -> np.ndarray:
        return self.states[:, self.names.index(name)]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


class IntegrationError(ArithmeticError):
    """Integration stopped early.  ``partial`` holds the steps completed so far."""

    def __init__(self, message, time, partial=None):
        super().__init__(message)
        self.time = time
        self.partial = partial


def output_grid(t0: float, t1: float, dt: float) -> np.ndarray:
    """``t0, t0 + dt, ..., t1``; ``dt`` must divide the interval up to rounding."""
    if not dt > 0:
        raise ValueError(f"step must be positive, got {dt}")
    n = int(round((t1 - t0) / dt))
    if n < 1 or abs(n * dt - (t1 - t0)) > 1e-9 * max(1.0, abs(t1 - t0)):
        raise ValueError(f"step {dt} does not divide [{t0}, {t1}]")
    grid = t0 + dt * np.arange(n + 1)
    grid[-1] = t1
    return grid


def integrate_fixed(system: OdeSystem, dt: float, method: str = "rk4") -> Trajectory:
    """Classic fourth-order Runge-Kutta on the uniform grid, ``t0`` included."""
    if method != "rk4":
        raise ValueError(f"unknown fixed-step method {method!r}")
    f = compile_rhs(system)
    grid = output_grid(system.t0, system.t1, dt)
    y = [system.initial[s] for s in system.states]
    rows = [y]
    fin = math.isfinite
    ts = grid.tolist()  # plain floats: overflow becomes inf without numpy warnings
    for k in range(len(ts) - 1):
        t = ts[k]
        h = ts[k + 1] - t
        h2 = 0.5 * h
        try:
            k1 = f(t, y)
            k2 = f(t + h2, [a + h2 * b for a, b in zip(y, k1)])
            k3 = f(t + h2, [a + h2 * b for a, b in zip(y, k2)])
            k4 = f(t + h, [a + h * b for a, b in zip(y, k3)])
        except (ZeroDivisionError, OverflowError, ValueError) as exc:
            raise IntegrationError(f"rhs evaluation failed at t={t}: {exc}", t,
                                   _partial(grid, rows, system)) from exc
        h6 = h / 6.0
        y = [a + h6 * (b + 2.0 * c + 2.0 * d + e) for a, b, c, d, e in zip(y, k1, k2, k3, k4)]
        if not all(fin(v) for v in y):
            raise IntegrationError(f"non-finite state at t={grid[k + 1]}", grid[k + 1],
                                   _partial(grid, rows, system))
        rows.append(y)
    return Trajectory(grid, np.array(rows), system.states, REFERENCE_FIXED, {"steps": len(grid) - 1})


def _partial(grid, rows, system):
    return Trajectory(grid[:len(rows)], np.array(rows), system.states, REFERENCE_FIXED)


# Dormand-Prince 5(4)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# fifth-order minus embedded fourth-order weights
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# continuous extension: y(t + s h) = y + h * K^T (P @ [s, s^2, s^3, s^4])
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

_SAFETY = 0.9
_FAC_MIN = 0.2
_FAC_MAX = 10.0
_BETA = 0.04
_EXPO = 0.2 - 0.75 * _BETA


def _rms(x):
    return float(np.sqrt(np.mean(x * x)))


def _initial_step(f, t0, y0, f0, atol, rtol, span):
    sc = atol + rtol * np.abs(y0)
    d0, d1 = _rms(y0 / sc), _rms(f0 / sc)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    f1 = np.asarray(f(t0 + h0, y0 + h0 * f0))
    d2 = _rms((f1 - f0) / sc) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span)


def integrate_adaptive(system: OdeSystem, atol: float = 1e-8, rtol: float = 1e-8,
                       output_dt: float = 0.01, max_steps: int = 1_000_000) -> Trajectory:
    """Dormand-Prince 5(4) with PI step control, sampled on a uniform output grid.

    Between accepted steps the solution is read off the pair's fourth-order
    continuous extension.
    """
    if not (atol > 0 and rtol > 0):
        raise ValueError("tolerances must be positive")
    rhs = compile_rhs(system)

    def f(t, y):
        # overflow shows up as inf and is caught by the step's finiteness check
        with np.errstate(over="ignore", invalid="ignore"):
            return np.array(rhs(t, y))

    t0, t1 = system.t0, system.t1
    grid = output_grid(t0, t1, output_dt)
    out = np.empty((len(grid), system.dim))
    y = system.initial_vector()
    out[0] = y
    nxt = 1
    t = t0
    K = np.empty((7, system.dim))
    K[0] = f(t, y)
    h = _initial_step(f, t, y, K[0], atol, rtol, t1 - t0)
    fac_old = 1e-4
    accepted = rejected = 0
    rejecting = False

    while t < t1:
        if accepted + rejected >= max_steps:
            raise IntegrationError(f"step limit reached at t={t}", t)
        if h < 16 * np.finfo(float).eps * max(abs(t), 1.0):
            raise IntegrationError(f"step size underflow at t={t}", t)
        last = t + h >= t1
        if last:
            h = t1 - t
        for i in range(1, 7):
            K[i] = f(t + _C[i] * h, y + h * (np.asarray(_A[i]) @ K[:i]))
        y_new = y + h * (_B @ K)  # equals the stage-7 input (first same as last)
        K[6] = f(t + h, y_new)
        if not np.all(np.isfinite(y_new)):
            err = np.inf
        else:
            sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = _rms(h * (_E @ K) / sc)

        if err <= 1.0:
            t_new = t1 if last else t + h
            while nxt < len(grid) and grid[nxt] <= t_new:
                if grid[nxt] == t_new:
                    out[nxt] = y_new
                else:
                    s = (grid[nxt] - t) / h
                    out[nxt] = y + h * (K.T @ (_P @ np.array([s, s * s, s ** 3, s ** 4])))
                nxt += 1
            accepted += 1
            fac11 = err ** _EXPO
            fac = min(1.0 / _FAC_MIN, max(1.0 / _FAC_MAX, fac11 / fac_old ** _BETA / _SAFETY))
            h_new = h / fac
            if rejecting:
                h_new = min(h_new, h)
            rejecting = False
            fac_old = max(err, 1e-4)
            t, y = t_new, y_new
            K[0] = K[6]
            h = h_new
        else:
            rejected += 1
            rejecting = True
            if np.isfinite(err):
                h = h / min(1.0 / _FAC_MIN, err ** _EXPO / _SAFETY)
            else:
                h = h * 0.1

    return Trajectory(grid, out, system.states, REFERENCE_ADAPTIVE,
                      {"accepted": accepted, "rejected": rejected, "atol": atol, "rtol": rtol})
