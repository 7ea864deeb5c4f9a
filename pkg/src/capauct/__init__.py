"""Revenue-optimal and approximately optimal auctions for bidders whose utility is capped."""

from .dist import (AgentSpec, DiscreteTypeSpace, EqualRevenue, Exponential, PiecewiseCdf, Uniform,
                   ValueDistribution, discretize, is_regular, monopoly_reserve, sample, virtual_value)
from .errors import CapauctError

__version__ = "0.1.0"

__all__ = [
    "AgentSpec", "CapauctError", "DiscreteTypeSpace", "EqualRevenue", "Exponential", "PiecewiseCdf",
    "Uniform", "ValueDistribution", "discretize", "is_regular", "monopoly_reserve", "sample",
    "virtual_value",
]
