"""Experiment harness: configs, scenario runners, rate fits and result files."""

from .config import ConfigError, ScenarioConfig, load_config, parse_config
from .fitting import DataError, RateFitReport, fit_rate
from .output import CSV_HEADER, read_results, render_csv, run_scenario
from .scenarios import execute, multid_sweep, stokes_scenario

__all__ = ["ConfigError", "ScenarioConfig", "load_config", "parse_config", "DataError", "RateFitReport",
           "fit_rate", "CSV_HEADER", "read_results", "render_csv", "run_scenario", "execute",
           "multid_sweep", "stokes_scenario"]
