"""Stationary densities and currents of second-class particles in the two-species q-deformed zero range process."""

__version__ = "0.1.0"

from .defect_kernel import DefectPattern, F_closed, G, G_compose, G_row, G_zero_run, K, bracket_A
from .dynamics import build_H, gillespie, local_h, phi_q, stationary_solve, transfer_matrix
from .errors import (
    DomainError,
    InsufficientCutoffError,
    ParameterRegimeError,
    QZRPError,
    ResourceLimitError,
)
from .profiles import (
    CurrentMix,
    Profile,
    asymptotic_limits,
    baseline_currents,
    baseline_P,
    profile,
    total_excess,
)
from .qboson import FockOperator, build_A, build_X, canonical_profile, fock_trace, stationary_probability
from .qseries import EnsembleParams, ModelParams, density, solve_fugacity
from .sectors import SectorLabel

__all__ = [
    "CurrentMix",
    "DefectPattern",
    "DomainError",
    "EnsembleParams",
    "F_closed",
    "FockOperator",
    "G",
    "G_compose",
    "G_row",
    "G_zero_run",
    "InsufficientCutoffError",
    "K",
    "ModelParams",
    "ParameterRegimeError",
    "Profile",
    "QZRPError",
    "ResourceLimitError",
    "SectorLabel",
    "asymptotic_limits",
    "baseline_P",
    "baseline_currents",
    "bracket_A",
    "build_A",
    "build_H",
    "build_X",
    "canonical_profile",
    "density",
    "fock_trace",
    "gillespie",
    "local_h",
    "phi_q",
    "profile",
    "solve_fugacity",
    "stationary_probability",
    "stationary_solve",
    "total_excess",
    "transfer_matrix",
]
