"""Experiment orchestration: configs, sweeps, CSV results and the CLI."""

from .config import ConfigError, ExperimentConfig, dump_config, load_config
from .experiments import (
    DYNAMIC,
    FIXED,
    build_meta_dataset,
    build_test_task,
    run_joint_baseline,
    run_radius_sweep,
    run_sample_sweep,
)
from .results import CSV_COLUMNS, ExperimentResult, ResultRow, emit_csv, parse_csv, read_csv

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "dump_config",
    "load_config",
    "DYNAMIC",
    "FIXED",
    "build_meta_dataset",
    "build_test_task",
    "run_joint_baseline",
    "run_radius_sweep",
    "run_sample_sweep",
    "CSV_COLUMNS",
    "ExperimentResult",
    "ResultRow",
    "emit_csv",
    "parse_csv",
    "read_csv",
]
