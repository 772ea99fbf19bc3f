"""Distributed semantic mapping for robot swarms.

Agents annotate objects, spread the annotations over a hash-placed tuple
mesh and merge repeated sightings by plurality vote.
"""

from .binpack import max_cost, optimal_cost, worst_cost
from .classes import ClassModel, default_classes
from .config import ConfigError, SimConfig
from .ensemble import brute_force_ensemble, ensemble_accuracy, plurality_vote
from .sim import InvariantViolation, World, run_experiment

__all__ = [
    "ClassModel",
    "ConfigError",
    "InvariantViolation",
    "SimConfig",
    "World",
    "brute_force_ensemble",
    "default_classes",
    "ensemble_accuracy",
    "max_cost",
    "optimal_cost",
    "plurality_vote",
    "run_experiment",
    "worst_cost",
]
