"""Numerical studies: manufactured-solution rates, QMC convergence, truncation."""
from __future__ import annotations

from .analysis import RateFit, fit_rate, richardson_functional, richardson_table
from .config import ConfigError, ExperimentConfig, build_config, load_config
from .example1 import run_example1
from .pipeline import SampleFailure
from .qmc_study import run_qmc_study, run_truncation_study
from .report import ExperimentReport

__all__ = ["RateFit", "fit_rate", "richardson_functional", "richardson_table", "ConfigError",
           "ExperimentConfig", "build_config", "load_config", "run_example1", "run_qmc_study",
           "run_truncation_study", "run_experiment", "ExperimentReport", "SampleFailure"]


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    if cfg.experiment == "ex1":
        return run_example1(cfg)
    if cfg.experiment == "truncation":
        return run_truncation_study(cfg)
    return run_qmc_study(cfg)
