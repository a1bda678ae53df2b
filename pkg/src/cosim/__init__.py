"""Co-simulation of coupled index-1 DAEs with dynamic iteration, plus an
electro-thermal cable model and a POD-reduced electro-quasistatic model."""

from .coupler import (
    Connection,
    CoupledProblem,
    CouplingResult,
    DynamicIteration,
    Monolithic,
    OneWay,
    WeakSync,
    estimate_contraction,
    run,
    suggest_order,
)
from .dae import CouplingPort, PortKind, SemiExplicitSystem, Subsystem, from_linear_implicit, lower_second_order, verify_index1
from .errors import CosimError
from .integrate import IntegratorConfig, Trajectory, integrate_window
from .waveform import Waveform

__version__ = "0.1.0"

__all__ = [
    "Connection",
    "CosimError",
    "CoupledProblem",
    "CouplingPort",
    "CouplingResult",
    "DynamicIteration",
    "IntegratorConfig",
    "Monolithic",
    "OneWay",
    "PortKind",
    "SemiExplicitSystem",
    "Subsystem",
    "Trajectory",
    "Waveform",
    "WeakSync",
    "estimate_contraction",
    "from_linear_implicit",
    "integrate_window",
    "lower_second_order",
    "run",
    "suggest_order",
    "verify_index1",
]
