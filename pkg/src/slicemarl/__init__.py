"""Cooperative two-agent RAN slicing: a URLLC and an eMBB slice manager share 13 RBGs."""

from .agents import LearnerConfig, QTable
from .env import NetworkConfig, RbgAllocation, SliceEnv
from .errors import SlicemarlError
from .harness import Algorithm, ExperimentConfig, RunResult, compare, run_experiment, sweep

__all__ = [
    "Algorithm",
    "ExperimentConfig",
    "LearnerConfig",
    "NetworkConfig",
    "QTable",
    "RbgAllocation",
    "RunResult",
    "SliceEnv",
    "SlicemarlError",
    "compare",
    "run_experiment",
    "sweep",
]
