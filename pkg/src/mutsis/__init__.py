"""Discrete-time SIS epidemics over time-varying networks.

Simulation, stability certificates for the healthy state, data-driven
healing-rate controllers and a mobility-based network generator.
"""

from .dynamics import Trajectory, fit_decay, simulate, step
from .mitigation import Controller
from .model import AssumptionError, EpidemicState, ModelError, ModelSequence, ModelStep, check_assumptions
from .netgen import ScenarioConfig, init_scenario
from .spectral import solve_discrete_lyapunov, spectral_radius
from .stability import check_theorem1, check_theorem2

__version__ = "0.1.0"

__all__ = [
    "AssumptionError", "Controller", "EpidemicState", "ModelError", "ModelSequence", "ModelStep",
    "ScenarioConfig", "Trajectory", "check_assumptions", "check_theorem1", "check_theorem2",
    "fit_decay", "init_scenario", "simulate", "solve_discrete_lyapunov", "spectral_radius", "step",
]
