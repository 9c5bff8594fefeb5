"""Numerical core: grid, ground state, functionals, evolution and the diagnostics on top."""

from .evolution import EvolutionParams, HaltStatus, Trace, evolve, scattering_detector
from .functionals import NonlinearityParams, ThresholdConstants, energy_report
from .grid import GridSpec, RadialField, build_basis
from .ground_state import GroundStateConstants, ground_state_constants, ground_state_profile
from .threshold import check_initial_assumptions, delta_prime, trapping_monitor

__all__ = [
    "EvolutionParams",
    "GridSpec",
    "GroundStateConstants",
    "HaltStatus",
    "NonlinearityParams",
    "RadialField",
    "ThresholdConstants",
    "Trace",
    "build_basis",
    "check_initial_assumptions",
    "delta_prime",
    "energy_report",
    "evolve",
    "ground_state_constants",
    "ground_state_profile",
    "scattering_detector",
    "trapping_monitor",
]
