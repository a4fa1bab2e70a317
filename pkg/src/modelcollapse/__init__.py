"""Recursive-training measure dynamics on finite supports, with exact oracles."""
from .config import ExperimentConfig, from_mapping, load_config
from .measure import ProbVector, Support, TestFunction

__version__ = "0.1.0"

__all__ = ["ExperimentConfig", "ProbVector", "Support", "TestFunction", "from_mapping", "load_config"]
