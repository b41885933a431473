"""Simulation and verification of Cucker-Smale flocking with the singular weight psi(s) = s**-alpha."""

from .config import SimConfig, parse_config
from .diagnostics import verify
from .integrator import EventKind, EventRecord, Run, StepControl, integrate, simulate, simulate_refinement_ladder
from .model import ClusterPartition, Normalization, ParticleSystem
from .oracle import OutcomeClass, TwoBodyState, classify, solve_reduced
from .scenarios import SCENARIOS, run_scenario
from .weights import WeightKernel

__version__ = "0.1.0"

__all__ = [
    "ClusterPartition",
    "EventKind",
    "EventRecord",
    "Normalization",
    "OutcomeClass",
    "ParticleSystem",
    "Run",
    "SCENARIOS",
    "SimConfig",
    "StepControl",
    "TwoBodyState",
    "WeightKernel",
    "classify",
    "integrate",
    "parse_config",
    "run_scenario",
    "simulate",
    "simulate_refinement_ladder",
    "solve_reduced",
    "verify",
]
