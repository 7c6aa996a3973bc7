"""Dual semi-Lagrangian solver for mean field games with Levy diffusion."""

from .errors import (
    CFLViolation,
    DegenerateIntensity,
    IncompatibleRuns,
    InvalidTruncation,
    LevyMfgError,
    MassMismatch,
    NegativeMass,
    NoConvergence,
    NonIntegrableMeasure,
    TimeOutOfRange,
    UnboundedControlSearch,
)
from .grid import Grid
from .levy import LevyDiscretization, LevyMeasure, derive

__version__ = "0.1.0"

__all__ = [
    "CFLViolation", "DegenerateIntensity", "Grid", "IncompatibleRuns", "InvalidTruncation",
    "LevyDiscretization", "LevyMeasure", "LevyMfgError", "MassMismatch", "NegativeMass",
    "NoConvergence", "NonIntegrableMeasure", "TimeOutOfRange", "UnboundedControlSearch", "derive",
]
