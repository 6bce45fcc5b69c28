"""Experiment drivers, data ingestion and command-line interface."""

from .config import ExperimentConfig, NarxExperimentConfig, load_config
from .data import load_io_csv, write_csv
from .experiments import (
    ExperimentReport,
    METHODS,
    run_damper_experiment,
    run_sample_experiment,
    sample_gp_function,
)
from .metrics import Metrics, metrics

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "METHODS",
    "Metrics",
    "NarxExperimentConfig",
    "load_config",
    "load_io_csv",
    "metrics",
    "run_damper_experiment",
    "run_sample_experiment",
    "sample_gp_function",
    "write_csv",
]
