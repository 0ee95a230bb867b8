"""Numerical laboratory for Carleman estimates of time-fractional diffusion."""

from .errors import (
    CarlemanLabError,
    CausalityViolation,
    ConfigError,
    DomainError,
    EmptySampleSet,
    OverflowGuard,
    RootFindFailure,
    SolveFailure,
    SupportViolation,
    ZeroDenominator,
)
from .params import PhasePoint, ProblemParams

__all__ = [
    "CarlemanLabError",
    "CausalityViolation",
    "ConfigError",
    "DomainError",
    "EmptySampleSet",
    "OverflowGuard",
    "RootFindFailure",
    "SolveFailure",
    "SupportViolation",
    "ZeroDenominator",
    "PhasePoint",
    "ProblemParams",
]

__version__ = "0.1.0"
