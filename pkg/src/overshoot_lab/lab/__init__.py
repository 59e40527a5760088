"""Config-driven experiments and the ``overshoot-lab`` command line."""

from .config import ExperimentConfig, build_config, read_config
from .experiments import CATALOG, Experiment, Outcome, defaults_for
from .runner import execute, load, run

__all__ = [
    "CATALOG",
    "Experiment",
    "ExperimentConfig",
    "Outcome",
    "build_config",
    "defaults_for",
    "execute",
    "load",
    "read_config",
    "run",
]
