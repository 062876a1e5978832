"""Hyperparameter search over conditional spaces with random search and TPE."""

from .optimizers import HPOAConfig, suggest, suggest_random, tpe_suggest
from .searchspace import (
    Assignment,
    ExprGraph,
    SpaceError,
    active_labels,
    evaluate,
    format_space,
    parse_space,
    sample_prior,
    validate_graph,
)
from .trialdb import Trial, TrialStore, best_trial

__version__ = "0.1.0"
