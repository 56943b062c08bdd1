"""Hyperparameter search spaces and strategies."""

from .gp import GaussianProcess, expected_improvement, matern52
from .search import (
    DEFAULT_BUDGET,
    N_INIT,
    STRATEGIES,
    SearchTrace,
    Trial,
    average_traces,
    bo_suggest,
    grid_enumerate,
    grid_sizes,
    normalized_traces,
    optimize,
    sample_random,
    space_size,
)
from .space import Categorical, Continuous, Discrete, LogContinuous, ParamDomain, SearchSpace, domain_from_json

__all__ = [
    "N_INIT",
    "Categorical",
    "Continuous",
    "Discrete",
    "LogContinuous",
    "ParamDomain",
    "SearchSpace",
    "domain_from_json",
    "GaussianProcess",
    "expected_improvement",
    "matern52",
    "DEFAULT_BUDGET",
    "STRATEGIES",
    "SearchTrace",
    "Trial",
    "average_traces",
    "bo_suggest",
    "grid_enumerate",
    "grid_sizes",
    "normalized_traces",
    "optimize",
    "sample_random",
    "space_size",
]
