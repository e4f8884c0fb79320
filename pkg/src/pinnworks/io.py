"""Run configuration, checkpoints and CSV output.

Configuration files are INI-style::

    [system]
    preset = normal          ; or: dsl = path/to/system.ode

    [network]
    mode = symbolic
    hidden = 10, 10, 10

    [sampler]
    kind = grid              ; or monte-carlo (with count = ...)
    dt = 0.01
    quadrature = as-printed  ; or trapezoid

    [optimizer]
    max_iter = 50000
    gtol = 1e-8

    [adaptive]
    enabled = false
    period = 10
    gamma = 0.9

    [run]
    seed = 0
    warm_start = runs/normal/checkpoint.txt

Checkpoints are line-oriented text with ``[meta]``, ``[dims]`` and
``[theta]`` sections; ``[theta]`` holds one value per line in flat layout
order, written with 17 significant digits so reloading is bit-exact.
``[meta]`` also records the fixed affine map applied to the time input.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .expr import OdeSystem, parse_system
from .models import preset
from .net import NetworkEnsemble, SubNetwork
from .odeint import Trajectory
from .training import TrainConfig

__all__ = [
    "ConfigError", "RunConfig", "load_config", "parse_config", "Checkpoint",
    "save_checkpoint", "load_checkpoint", "write_trajectory_csv",
    "read_trajectory_csv", "load_system", "fmt17", "CHECKPOINT_VERSION",
]

CHECKPOINT_VERSION = "1"


class ConfigError(ValueError):
    pass


def fmt17(x: float) -> str:
    return format(float(x), ".17g")


def load_system(preset_name: str | None = None, dsl_path: str | Path | None = None) -> OdeSystem:
    if (preset_name is None) == (dsl_path is None):
        raise ConfigError("give exactly one of a preset name or a system file")
    if preset_name is not None:
        try:
            return preset(preset_name)[0]
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
    path = Path(dsl_path)
    if not path.is_file():
        raise ConfigError(f"system file {path} does not exist")
    return parse_system(path.read_text(), name=path.stem)


# ---------------------------------------------------------------------------
# run configuration


@dataclass
class RunConfig:
    preset: str | None = None
    dsl: Path | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    warm_start: Path | None = None
    text: str = ""

    def system(self) -> OdeSystem:
        return load_system(self.preset, self.dsl)

    def digest(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()[:16]


_TRAIN_KEYS = {
    ("network", "mode"): "mode",
    ("network", "hidden"): "hidden",
    ("sampler", "kind"): "sampler",
    ("sampler", "dt"): "dt",
    ("sampler", "count"): "mc_count",
    ("sampler", "quadrature"): "quadrature",
    ("optimizer", "max_iter"): "max_iter",
    ("optimizer", "gtol"): "gtol",
    ("optimizer", "ftol"): "ftol",
    ("optimizer", "loss_target"): "loss_target",
    ("optimizer", "memory"): "memory",
    ("optimizer", "reset_on_change"): "reset_on_change",
    ("adaptive", "enabled"): "adaptive",
    ("adaptive", "period"): "period",
    ("adaptive", "gamma"): "gamma",
    ("adaptive", "pairing"): "pairing",
    ("run", "seed"): "seed",
}
_KNOWN = {"system": {"preset", "dsl"}, "run": {"seed", "warm_start"}}
for _sec, _key in _TRAIN_KEYS:
    _KNOWN.setdefault(_sec, set()).add(_key)

_BOOL = {"true": True, "yes": True, "on": True, "1": True,
         "false": False, "no": False, "off": False, "0": False}


def _convert(name, raw: str):
    types = {f.name: f.type for f in fields(TrainConfig)}
    kind = types[name]
    raw = raw.strip()
    if name == "hidden":
        return tuple(int(w) for w in raw.replace(",", " ").split())
    if "None" in kind and raw.lower() in ("", "none"):
        return None
    if kind.startswith("bool"):
        if raw.lower() not in _BOOL:
            raise ValueError(f"not a boolean: {raw!r}")
        return _BOOL[raw.lower()]
    if kind.startswith("int"):
        return int(raw)
    if kind.startswith("float"):
        return float(raw)
    return raw


def parse_config(text: str, base: Path | None = None) -> RunConfig:
    """Parse configuration text; relative paths resolve against ``base``."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    for section in cp.sections():
        if section not in _KNOWN:
            raise ConfigError(f"unknown section [{section}]")
        extra = set(cp[section]) - _KNOWN[section]
        if extra:
            raise ConfigError(f"unknown keys in [{section}]: {', '.join(sorted(extra))}")

    values = {}
    for (section, key), name in _TRAIN_KEYS.items():
        if cp.has_option(section, key):
            try:
                values[name] = _convert(name, cp.get(section, key))
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from None
    try:
        train = TrainConfig(**values)
        train.bfgs()
        train.adaptive_config()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if train.mode not in ("symbolic", "conventional"):
        raise ConfigError(f"[network] mode must be symbolic or conventional, got {train.mode!r}")
    if train.sampler not in ("grid", "monte-carlo"):
        raise ConfigError(f"[sampler] kind must be grid or monte-carlo, got {train.sampler!r}")
    if train.quadrature not in ("as-printed", "trapezoid"):
        raise ConfigError(f"[sampler] quadrature must be as-printed or trapezoid, got {train.quadrature!r}")
    if not train.dt > 0 or train.mc_count < 1 or train.max_iter < 0:
        raise ConfigError("[sampler]/[optimizer] numeric fields out of range")
    if train.hidden is not None and (not train.hidden or min(train.hidden) <= 0):
        raise ConfigError("[network] hidden widths must be positive integers")

    base = base or Path.cwd()
    preset_name = cp.get("system", "preset", fallback=None)
    dsl = cp.get("system", "dsl", fallback=None)
    if (preset_name is None) == (dsl is None):
        raise ConfigError("[system] needs exactly one of preset or dsl")
    dsl_path = None if dsl is None else (base / dsl)
    warm = cp.get("run", "warm_start", fallback="").strip() or None
    warm_path = None if warm is None else (base / warm)
    cfg = RunConfig(preset_name, dsl_path, train, warm_path, text)
    cfg.system()
    if warm_path is not None and not warm_path.is_file():
        raise ConfigError(f"warm-start checkpoint {warm_path} does not exist")
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    return parse_config(path.read_text(), base=path.parent)


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    ensemble: NetworkEnsemble
    states: tuple[str, ...]
    meta: dict = field(default_factory=dict)

    @property
    def theta(self):
        return self.ensemble.theta


def save_checkpoint(path: str | Path, ensemble: NetworkEnsemble, states, meta=None):
    lines = ["[meta]", f"version = {CHECKPOINT_VERSION}", f"mode = {ensemble.mode}",
             f"states = {','.join(states)}", f"t_shift = {fmt17(ensemble.t_shift)}",
             f"t_scale = {fmt17(ensemble.t_scale)}"]
    for key, value in (meta or {}).items():
        lines.append(f"{key} = {fmt17(value) if isinstance(value, float) else value}")
    lines.append("")
    lines.append("[dims]")
    for i, m in enumerate(ensemble.members):
        lines.append(f"{i} = {','.join(map(str, m.dims))}")
    lines.append("")
    lines.append("[theta]")
    lines.extend(fmt17(x) for x in ensemble.theta)
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"checkpoint {path} does not exist")
    section = None
    meta, dims, theta = {}, {}, []
    for n, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1]
            continue
        if section in ("meta", "dims"):
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{n}: expected key = value")
            (meta if section == "meta" else dims)[key.strip()] = value.strip()
        elif section == "theta":
            try:
                theta.append(float(line))
            except ValueError:
                raise ConfigError(f"{path}:{n}: bad parameter value {line!r}") from None
        else:
            raise ConfigError(f"{path}:{n}: content outside a known section")
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {meta.get('version')!r}")
    members = [SubNetwork(tuple(int(d) for d in dims[k].split(","))) for k in sorted(dims, key=int)]
    try:
        ens = NetworkEnsemble(meta["mode"], members, np.array(theta),
                              float(meta.get("t_shift", 0.0)), float(meta.get("t_scale", 1.0)))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    states = tuple(meta["states"].split(","))
    return Checkpoint(ens, states, meta)


# ---------------------------------------------------------------------------
# CSV


def write_trajectory_csv(path: str | Path, traj: Trajectory, extra: dict | None = None):
    """Header ``t,<var1>,...`` then one row per time stamp; extra columns go last."""
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *traj.names, *extra])
        cols = [np.asarray(v) for v in extra.values()]
        for k, t in enumerate(traj.times):
            w.writerow([fmt17(t), *(fmt17(x) for x in traj.states[k]), *(fmt17(c[k]) for c in cols)])


def read_trajectory_csv(path: str | Path, provenance: str = "pinn") -> Trajectory:
    """Read a CSV written by `write_trajectory_csv`; every non-time column becomes a state."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float).reshape(len(rows) - 1, len(rows[0]))
    if header[0] != "t":
        raise ValueError(f"{path}: first column must be t")
    return Trajectory(body[:, 0], body[:, 1:], header[1:], provenance)
