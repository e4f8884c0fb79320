"""``pinnworks`` command line.

Subcommands::

    pinnworks train    --config run.ini --out runs/normal [--seed N] [--warm-start ckpt]
    pinnworks simulate --preset normal --out ref.csv [--dt 0.01 | --tol 1e-8]
    pinnworks compare  --checkpoint runs/normal/checkpoint.txt --preset normal --out cmp/

Exit status: 0 on success, 1 when training could not take a single step,
2 for configuration errors, 3 for numerical blow-up.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .expr import DSLError, OdeSystem
from .io import (ConfigError, fmt17, load_checkpoint, load_config, load_system,
                 save_checkpoint, write_trajectory_csv)
from .metrics import compare, near_equilibrium
from .models import equilibrium, smib_energy
from .net import LayoutError
from .odeint import IntegrationError, integrate_adaptive, integrate_fixed
from .optim import LINE_SEARCH_FAILURE
from .plotting import plot_loss_history, plot_overlay, plot_phase
from .training import pinn_trajectory, train

log = logging.getLogger("pinnworks")

EXIT_OK, EXIT_NO_PROGRESS, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def smib_equilibrium(system: OdeSystem):
    """``(arcsin(K1/K2), 0)`` for swing-equation systems, else None."""
    if system.states != ("delta", "omega") or not {"K1", "K2"} <= set(system.params):
        return None
    K1, K2 = system.params["K1"], system.params["K2"]
    if abs(K1) > abs(K2):
        return None
    return equilibrium(K1, K2)


def _write_report(path: Path, sections: dict):
    cp = configparser.ConfigParser()
    for name, values in sections.items():
        cp[name] = {k: fmt17(v) if isinstance(v, float) else str(v) for k, v in values.items()}
    with open(path, "w") as fh:
        cp.write(fh)


# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    tc = cfg.train
    if args.seed is not None:
        tc = replace(tc, seed=args.seed)
    if args.max_iter is not None:
        tc = replace(tc, max_iter=args.max_iter)
    warm = Path(args.warm_start) if args.warm_start else cfg.warm_start
    system = cfg.system()
    previous = None
    if warm is not None:
        ckpt = load_checkpoint(warm)
        if ckpt.states != system.states:
            raise ConfigError(f"checkpoint states {ckpt.states} do not match system {system.states}")
        previous = ckpt.ensemble

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def progress(state):
        if state.iteration % 500 == 0:
            log.info("iteration %d  loss %.6g  evaluations %d", state.iteration, state.loss, state.evaluations)

    try:
        result = train(system, tc, previous, on_iteration=progress)
    except FloatingPointError as exc:
        _write_report(out / "report.txt", {"train": {"stop_reason": "numeric-failure", "error": exc}})
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    rep = result.report
    save_checkpoint(out / "checkpoint.txt", result.ensemble, system.states, {
        "config_digest": cfg.digest(), "seed": tc.seed, "final_loss": rep.final_loss,
        "iterations": rep.iterations, "stop_reason": rep.stop_reason,
    })
    with open(out / "loss_history.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "loss"])
        for i, v in enumerate(rep.losses):
            w.writerow([i, fmt17(v)])
    with open(out / "weights.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", *(f"w_boundary[{s}]" for s in system.states)])
        for it, weights in rep.weight_history:
            w.writerow([it, *(fmt17(x) for x in weights)])
    plot_loss_history(rep.losses, out / "loss.svg", rep.objective_changes)

    breakdown = result.assembly.breakdown(result.theta).as_dict(system.states)
    sections = {
        "train": {
            "system": system.name or "custom", "mode": tc.mode, "param_count": result.ensemble.param_count,
            "seed": tc.seed, "stop_reason": rep.stop_reason, "iterations": rep.iterations,
            "evaluations": rep.evaluations, "final_loss": rep.final_loss, "unit_weight_loss": result.unit_loss,
            "seconds": round(rep.seconds, 3), "warm_start": warm or "none", "config_digest": cfg.digest(),
        },
        "loss": breakdown,
    }
    _write_report(out / "report.txt", sections)
    print(f"{rep.stop_reason} after {rep.iterations} iterations; loss {rep.final_loss:.6g}; "
          f"{result.ensemble.param_count} parameters; {rep.seconds:.1f} s")
    if rep.stop_reason == LINE_SEARCH_FAILURE and rep.iterations == 0:
        return EXIT_NO_PROGRESS
    return EXIT_OK


def _system_from_args(args) -> OdeSystem:
    system = load_system(args.preset, args.system)
    if getattr(args, "horizon", None) is not None:
        system = system.with_domain(system.t0, system.t0 + args.horizon)
    return system


def _reference(system, dt=None, tol=1e-8, output_dt=0.01):
    if dt is not None:
        return integrate_fixed(system, dt)
    return integrate_adaptive(system, tol, tol, output_dt)


def cmd_simulate(args) -> int:
    system = _system_from_args(args)
    eq = smib_equilibrium(system)
    try:
        traj = _reference(system, args.dt, args.tol, args.output_dt)
    except IntegrationError as exc:
        if exc.partial is not None:
            write_trajectory_csv(args.out, exc.partial)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    extra = {}
    if eq is not None:
        extra["energy"] = smib_energy(traj.column("delta"), traj.column("omega"),
                                      system.params["K1"], system.params["K2"])
    write_trajectory_csv(args.out, traj, extra)
    final = ", ".join(f"{n}={v:.6f}" for n, v in zip(traj.names, traj.final))
    print(f"{len(traj)} rows to {args.out}; final state at t={traj.times[-1]:g}: {final}")
    if eq is not None:
        dist = np.max(np.abs(traj.final - np.array(eq)))
        print(f"equilibrium ({eq[0]:.6f}, 0): distance {dist:.3e}, "
              f"reached={near_equilibrium(traj.final, eq)}")
    return EXIT_OK


def cmd_compare(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    system = _system_from_args(args)
    if ckpt.states != system.states:
        raise ConfigError(f"checkpoint states {ckpt.states} do not match system {system.states}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pinn = pinn_trajectory(ckpt.ensemble, system, args.output_dt)
    try:
        ref = _reference(system, None, args.tol, args.output_dt)
    except IntegrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    eq = smib_equilibrium(system)
    report = compare(ref, pinn, eq)

    write_trajectory_csv(out / "pinn.csv", pinn)
    write_trajectory_csv(out / "reference.csv", ref)
    with open(out / "errors.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *system.states])
        for t, row in zip(report.times, report.errors):
            w.writerow([fmt17(t), *(fmt17(x) for x in row)])
    for name in system.states:
        plot_overlay(ref, pinn, name, out / f"{name}.svg")
    if system.dim >= 2:
        plot_phase(ref, pinn, out / "phase.svg", eq)
    _write_report(out / "report.txt", {"compare": report.summary()})

    for name, value in report.rmse.items():
        print(f"rmse[{name}] = {value:.6e}")
    print(f"rmse[pooled] = {report.pooled_rmse:.6e}")
    if report.equilibrium_reached is not None:
        print(f"equilibrium reached: {report.equilibrium_reached}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pinnworks", description="Physics-informed networks for ODE systems")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a network ensemble")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--warm-start")
    p.add_argument("--max-iter", type=int)
    p.set_defaults(func=cmd_train)

    def system_args(p):
        g = p.add_mutually_exclusive_group(required=True)
        g.add_argument("--preset")
        g.add_argument("--system", help="system description file")
        p.add_argument("--horizon", type=float, help="override the domain length in seconds")
        p.add_argument("--output-dt", type=float, default=0.01)
        p.add_argument("--seed", type=int, default=0, help="accepted for uniformity; nothing here is random")

    p = sub.add_parser("simulate", help="integrate a system with a reference solver")
    system_args(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--dt", type=float, help="fixed-step RK4 with this step")
    g.add_argument("--tol", type=float, default=1e-8, help="adaptive 5(4) tolerance")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="compare a checkpoint with the reference solution")
    p.add_argument("--checkpoint", required=True)
    system_args(p)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DSLError, LayoutError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
