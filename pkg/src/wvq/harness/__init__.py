"""Experiment harness: configs, drivers, reports and the ``wvq`` CLI."""

from .config import Experiment, ExperimentConfig, build_config, load_config
from .experiments import (Outcome, run_atomic, run_disks, run_experiment, run_gaussian_sweep,
                          run_lloyd_check, run_uniform_sweep, run_variance_table)
from .report import PlotKind, ResultRow, Series, emit_csv, emit_json, emit_svg, summarize

__all__ = [
    "Experiment", "ExperimentConfig", "Outcome", "PlotKind", "ResultRow", "Series", "build_config",
    "emit_csv", "emit_json", "emit_svg", "load_config", "run_atomic", "run_disks",
    "run_experiment", "run_gaussian_sweep", "run_lloyd_check", "run_uniform_sweep",
    "run_variance_table", "summarize",
]
