"""Proximal splitting algorithms with constant and accelerated stepsizes."""

from .operators import LinearMap, ParameterError, ProxTerm, SmoothTerm, prox_conjugate
from .schedules import Schedule, ScheduleError
from .solvers import DivergenceError, Probe, StoppingRule, TermBundle, init_state, run
from .distributed import LiftedProblem, NodeSpec, simulate

__all__ = [
    "LinearMap",
    "ParameterError",
    "ProxTerm",
    "SmoothTerm",
    "prox_conjugate",
    "Schedule",
    "ScheduleError",
    "DivergenceError",
    "Probe",
    "StoppingRule",
    "TermBundle",
    "init_state",
    "run",
    "LiftedProblem",
    "NodeSpec",
    "simulate",
]
