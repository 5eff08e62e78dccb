"""Experiment harness: configs, sweeps, fits, combined-noise surface and the CLI."""
from .config import ConfigError, ExperimentConfig, load_config, parse_code, parse_config, parse_grid
from .sweeps import (CombinedSurface, FitResult, combined_surface, comparison_table, cycle_time_bound,
                     fit_power_law, qubit_equivalent, relative_infidelity, sweep_alpha, sweep_delta,
                     sweep_gamma)

__all__ = [
    "ConfigError", "ExperimentConfig", "load_config", "parse_code", "parse_config", "parse_grid",
    "CombinedSurface", "FitResult", "combined_surface", "comparison_table", "cycle_time_bound",
    "fit_power_law", "qubit_equivalent", "relative_infidelity", "sweep_alpha", "sweep_delta",
    "sweep_gamma",
]
