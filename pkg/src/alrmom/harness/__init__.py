"""Experiment specs, trace files, figure re-runs and the command-line tool."""

from ..trace import read_trace, write_trace
from .experiment import ExperimentSpec, load_spec, run_experiment, run_single
from .repro import FIGURES, run_figure

__all__ = ["ExperimentSpec", "load_spec", "run_experiment", "run_single", "read_trace",
           "write_trace", "FIGURES", "run_figure"]
