"""Steady states, fluctuations and spin squeezing of the dissipative
infinite-range transverse-field Ising model."""

from dtfim.params import SystemParams, Sweep
from dtfim.meanfield import (
    BranchSet,
    FixedPoint,
    MeanFieldState,
    critical_points,
    cubic_coefficients,
    jacobian,
    steady_states,
)
from dtfim.fluctuations import FluctuationModel, SpinMoments, build_model, solve_lyapunov
from dtfim.squeezing import SqueezingResult, squeezing_parameter

__version__ = "0.1.0"

__all__ = [
    "BranchSet",
    "FixedPoint",
    "FluctuationModel",
    "MeanFieldState",
    "SpinMoments",
    "SqueezingResult",
    "Sweep",
    "SystemParams",
    "build_model",
    "critical_points",
    "cubic_coefficients",
    "jacobian",
    "solve_lyapunov",
    "squeezing_parameter",
    "steady_states",
]
