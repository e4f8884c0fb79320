"""Single-machine infinite-bus (SMIB) swing model and its named scenarios.

State: rotor angle ``delta`` (rad) and transient speed ``omega`` (rad/s)::

    d(delta)/dt = omega
    d(omega)/dt = K1 - K2*sin(delta) - K3*omega
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .expr import OdeSystem, parse_system

__all__ = [
    "SmibPhysical", "SmibScenario", "k_from_physical", "smib_system", "preset",
    "PRESETS", "equilibrium", "smib_energy", "SMIB_STATES",
]

SMIB_STATES = ("delta", "omega")


@dataclass(frozen=True)
class SmibPhysical:
    H: float        # inertia constant, s
    D: float        # damping coefficient, pu
    Tm: float       # mechanical torque, pu
    omega_s: float  # reference angular speed, rad/s
    Ec: float       # internal generator voltage, pu
    V_inf: float    # infinite bus voltage, pu
    X: float        # total reactance, pu


def k_from_physical(p: SmibPhysical) -> tuple[float, float, float]:
    """Map machine data to ``(K1, K2, K3)``; all three share the factor ``omega_s / 2H``."""
    if p.H <= 0 or p.X <= 0 or p.omega_s <= 0:
        raise ValueError("H, X and omega_s must be positive")
    c = p.omega_s / (2.0 * p.H)
    return c * p.Tm, c * p.Ec * p.V_inf / p.X, c * p.D


@dataclass(frozen=True)
class SmibScenario:
    K1: float
    K2: float
    K3: float
    delta0: float
    omega0: float
    horizon: float = 10.0
    label: str = ""

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")


def smib_system(s: SmibScenario) -> OdeSystem:
    src = (
        f"param K1={s.K1!r} K2={s.K2!r} K3={s.K3!r};\n"
        "d(delta)/dt = omega;\n"
        "d(omega)/dt = K1 - K2*sin(delta) - K3*omega;\n"
        f"init delta={s.delta0!r} omega={s.omega0!r};\n"
        f"domain 0 {s.horizon!r}\n"
    )
    return parse_system(src, name=s.label)


PRESETS = {
    "normal": SmibScenario(5.0, 10.0, 1.7, -1.0, 7.0, label="normal"),
    "case1": SmibScenario(5.0, 10.0, 1.7, 1.0, -5.0, label="case1"),
    "case2": SmibScenario(5.0, 10.0, 1.7, 0.0, 2.0, label="case2"),
    "pole-slipping": SmibScenario(5.0, 10.0, 1.6, -1.0, 7.0, label="pole-slipping"),
    # no damping: energy is conserved, used to check the integrators
    "undamped": SmibScenario(5.0, 10.0, 0.0, -1.0, 7.0, label="undamped"),
}


def preset(name: str) -> tuple[OdeSystem, SmibScenario]:
    try:
        scenario = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    return smib_system(scenario), scenario


def equilibrium(K1: float, K2: float) -> tuple[float, float]:
    """Stable operating point ``(arcsin(K1/K2), 0)``."""
    return math.asin(K1 / K2), 0.0


def smib_energy(delta, omega, K1: float, K2: float):
    """``omega^2/2 - K1*delta - K2*cos(delta)``; constant along undamped trajectories."""
    delta = np.asarray(delta)
    return 0.5 * np.asarray(omega) ** 2 - K1 * delta - K2 * np.cos(delta)
