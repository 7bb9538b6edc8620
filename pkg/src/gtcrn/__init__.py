"""Girsanov-transformation sensitivities for stochastic reaction networks."""

from .network import (
    ModelError,
    Reaction,
    ReactionClassification,
    ReactionNetwork,
    apply_reaction,
    classify_reactions,
    parse_model,
    propensity,
)
from .simulator import ExplosionGuard, SimConfig, Trajectory, simulate, simulate_coupled

__version__ = "0.1.0"
