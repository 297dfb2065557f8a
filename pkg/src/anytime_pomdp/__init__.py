"""Anytime online POMDP planning.

Belief-space AND-OR search guided by offline alpha-vector bounds, the
classic online baselines, and the RockSample / Tag benchmark domains.
"""
from .bounds import (
    AlphaVectorSet,
    blind_bound,
    build_bound,
    fib_bound,
    mdp_bound,
    pbvi_bound,
    qmdp_bound,
    state_value_bound,
)
from .core import Belief, Environment, PomdpModel, random_model, validate_model
from .domains import Domain, build_fvrs, build_rocksample, build_tag, parse_domain
from .errors import (
    ConfigError,
    ExpandNonFringe,
    InternalConsistencyError,
    InvalidLayout,
    ParseError,
    PomdpError,
    TerminalState,
    ValidationError,
    ZeroProbabilityObservation,
)
from .harness import ExperimentPlan, run_experiment
from .heuristics import HEURISTICS, make_heuristic
from .planners import PlannerConfig, make_planner, run_online_episode
from .pomdp_format import load_model, parse_model, save_model
from .tree import SearchTree

__version__ = "0.1.0"

__all__ = [
    "AlphaVectorSet", "Belief", "ConfigError", "Domain", "Environment", "ExpandNonFringe", "ExperimentPlan",
    "HEURISTICS", "InternalConsistencyError", "InvalidLayout", "ParseError", "PlannerConfig", "PomdpError",
    "PomdpModel", "SearchTree", "TerminalState", "ValidationError", "ZeroProbabilityObservation",
    "blind_bound", "build_bound", "build_fvrs", "build_rocksample", "build_tag", "fib_bound", "load_model",
    "make_heuristic", "make_planner", "mdp_bound", "parse_domain", "parse_model", "pbvi_bound", "qmdp_bound",
    "random_model", "run_experiment", "run_online_episode", "save_model", "state_value_bound", "validate_model",
]
