"""SVG figures for training and comparison runs.

Figures are written with a fixed hash salt and no date stamp so that
identical inputs give byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .odeint import Trajectory  # noqa: E402

__all__ = ["plot_overlay", "plot_phase", "plot_loss_history", "STYLE"]

STYLE = {
    "svg.hashsalt": "pinnworks",
    "figure.figsize": (6.0, 3.6),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
    "legend.frameon": False,
}

LABELS = {"delta": r"$\delta$ (rad)", "omega": r"$\omega_t$ (rad/s)"}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_overlay(reference: Trajectory, candidate: Trajectory, name: str, path):
    """One state variable over time: reference dashed, network solid."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(candidate.times, candidate.column(name), "-", lw=1.6, label="PINN")
        ax.plot(reference.times, reference.column(name), "--", lw=1.2, color="k", label="reference")
        ax.set_xlabel("t (s)")
        ax.set_ylabel(LABELS.get(name, name))
        ax.legend()
        _save(fig, path)


def plot_phase(reference: Trajectory, candidate: Trajectory, path, equilibrium=None):
    """Phase portrait of the first two states."""
    x, y = reference.names[:2]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 4.0))
        ax.plot(candidate.column(x), candidate.column(y), "-", lw=1.6, label="PINN")
        ax.plot(reference.column(x), reference.column(y), "--", lw=1.2, color="k", label="reference")
        ax.plot(*reference.states[0, :2], "o", color="k", ms=4)
        if equilibrium is not None:
            ax.plot(*equilibrium, "x", color="tab:red", ms=7, label="equilibrium")
        ax.set_xlabel(LABELS.get(x, x))
        ax.set_ylabel(LABELS.get(y, y))
        ax.legend()
        _save(fig, path)


def plot_loss_history(losses, path, changes=()):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.semilogy(range(len(losses)), losses, lw=1.0)
        for it in changes[:1]:
            ax.axvline(it, color="0.6", lw=0.6, ls=":", label="weights updated")
        ax.set_xlabel("iteration")
        ax.set_ylabel("total loss")
        if changes:
            ax.legend()
        _save(fig, path)
