"""Experiment configs, sweeps, rate fits and reports."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .fitting import AsymptoticFit, FitError, fit_rate, richardson
from .run import Check, Outcome, run

__all__ = ["AsymptoticFit", "Check", "ConfigError", "ExperimentConfig", "FitError", "Outcome",
           "fit_rate", "load_config", "parse_config", "richardson", "run"]
