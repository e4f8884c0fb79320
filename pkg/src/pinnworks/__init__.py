"""Physics-informed neural networks for systems of ordinary differential equations.

Each state variable can get its own small network ("symbolic" mode) or all
states can share one multi-output network ("conventional" mode).  Systems are
written in a small text language, parsed to expression trees and
differentiated symbolically; networks, losses and the BFGS optimizer run on
numpy.
"""

from .expr import DSLError, OdeSystem, diff, evaluate, format_system, parse_system
from .metrics import compare
from .models import equilibrium, preset, smib_system
from .net import NetworkEnsemble, init_ensemble
from .odeint import Trajectory, integrate_adaptive, integrate_fixed
from .training import TrainConfig, pinn_trajectory, train

__version__ = "0.1.0"

__all__ = [
    "DSLError", "OdeSystem", "diff", "evaluate", "format_system", "parse_system",
    "compare", "equilibrium", "preset", "smib_system", "NetworkEnsemble", "init_ensemble",
    "Trajectory", "integrate_adaptive", "integrate_fixed", "TrainConfig",
    "pinn_trajectory", "train",
]
