"""Learn the runtime situations of a black-box system and find pareto-optimal
configurations for each of them."""

from .pareto import ObjectiveVector, dominates, hypervolume_2d, pareto_front
from .space import CROWDNAV_SPACE, ParameterSpace, ParameterSpec
from .surrogate import Context, MiniNav

__all__ = [
    "CROWDNAV_SPACE",
    "Context",
    "MiniNav",
    "ObjectiveVector",
    "ParameterSpace",
    "ParameterSpec",
    "dominates",
    "hypervolume_2d",
    "pareto_front",
]
