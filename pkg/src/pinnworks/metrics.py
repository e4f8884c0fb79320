"""Trajectory comparison."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .odeint import Trajectory

__all__ = ["ComparisonReport", "compare", "rmse", "near_equilibrium", "EQUILIBRIUM_TOL"]

# max-norm distance for the equilibrium check; the pole-slipping reference
# itself is still 0.023 rad/s from rest at t = 10 s
EQUILIBRIUM_TOL = 0.05


def rmse(a, b) -> np.ndarray:
    """Column-wise root mean square difference."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return np.sqrt(np.mean(d * d, axis=0))


def near_equilibrium(state, point, tol: float = EQUILIBRIUM_TOL, angle_index: int | None = 0) -> bool:
    """Whether ``state`` is within ``tol`` (max-norm) of ``point``.

    The component at ``angle_index`` is compared modulo 2*pi, so a machine
    that slipped poles and settled one revolution further still counts.
    """
    diff = np.asarray(state, dtype=float) - np.asarray(point, dtype=float)
    if angle_index is not None:
        diff[angle_index] = math.remainder(diff[angle_index], 2.0 * math.pi)
    return bool(np.max(np.abs(diff)) <= tol)


@dataclass
class ComparisonReport:
    names: tuple[str, ...]
    times: np.ndarray
    errors: np.ndarray          # candidate minus reference, per time and variable
    rmse: dict[str, float]
    pooled_rmse: float
    max_abs_error: dict[str, tuple[float, float]]  # name -> (value, time)
    equilibrium_reached: bool | None
    final_state: np.ndarray

    def summary(self) -> dict:
        out = {f"rmse[{n}]": v for n, v in self.rmse.items()}
        out["rmse[pooled]"] = self.pooled_rmse
        for n, (v, t) in self.max_abs_error.items():
            out[f"max_abs_error[{n}]"] = v
            out[f"max_abs_error_time[{n}]"] = t
        out["final_state"] = " ".join(f"{x:.6g}" for x in self.final_state)
        out["equilibrium_reached"] = self.equilibrium_reached
        return out


def compare(reference: Trajectory, candidate: Trajectory, equilibrium=None,
            tol: float = EQUILIBRIUM_TOL, angle_index: int | None = 0) -> ComparisonReport:
    """Per-variable RMSE and error series of ``candidate`` against ``reference``.

    Both trajectories must share the time grid and variable order.  When an
    ``equilibrium`` point is given, the report says whether the candidate's
    final state lies within ``tol`` of it.
    """
    if reference.names != candidate.names:
        raise ValueError(f"variable mismatch: {reference.names} vs {candidate.names}")
    if len(reference.times) != len(candidate.times) or not np.allclose(
            reference.times, candidate.times, rtol=0.0, atol=1e-9):
        raise ValueError("trajectories are not on the same time grid")
    errors = candidate.states - reference.states
    per_var = np.sqrt(np.mean(errors * errors, axis=0))
    pooled = float(np.sqrt(np.mean(errors * errors)))
    abs_err = np.abs(errors)
    worst = np.argmax(abs_err, axis=0)
    max_err = {n: (float(abs_err[k, i]), float(reference.times[k]))
               for i, (n, k) in enumerate(zip(reference.names, worst))}
    reached = None
    if equilibrium is not None:
        reached = near_equilibrium(candidate.final, equilibrium, tol, angle_index)
    return ComparisonReport(reference.names, reference.times, errors,
                            dict(zip(reference.names, map(float, per_var))), pooled, max_err,
                            reached, candidate.final.copy())
