"""Experiment orchestration and command-line interface."""

from optsense.harness.config import ExperimentConfig, load_config, parse_config
from optsense.harness.experiment import (
    SweepResult,
    SweepRow,
    run_precision_step,
    run_sweep,
)
from optsense.harness.io import emit_csv, read_csv

__all__ = [
    "ExperimentConfig",
    "SweepResult",
    "SweepRow",
    "emit_csv",
    "load_config",
    "parse_config",
    "read_csv",
    "run_precision_step",
    "run_sweep",
]
