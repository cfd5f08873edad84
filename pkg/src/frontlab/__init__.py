"""Invasion fronts of gradient reaction-diffusion systems: speeds, fronts, simulations."""

__version__ = "0.1.0"

from .errors import (BlowUpError, ConfigError, FrontlabError, InconclusiveError, NoBracketError,
                     NumericalFailure)
from .potential import PotentialSpec, critical_point_at, find_critical_point, make_fisher

__all__ = ["__version__", "PotentialSpec", "make_fisher", "critical_point_at", "find_critical_point",
           "FrontlabError", "ConfigError", "NumericalFailure", "BlowUpError", "NoBracketError",
           "InconclusiveError"]
