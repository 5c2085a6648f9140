"""Monte Carlo experiments, their configuration and reports."""

from .config import DEFAULT_SEED, DEFAULTS, EXPERIMENTS, ConfigError, ExperimentConfig, load_config, validate_config
from .report import Report, load_report
from .runs import RUNNERS, VERDICTS, ExperimentRefused, reevaluate, run_experiment

__all__ = [
    "DEFAULT_SEED", "DEFAULTS", "EXPERIMENTS", "ConfigError", "ExperimentConfig", "load_config",
    "validate_config", "Report", "load_report", "RUNNERS", "VERDICTS", "ExperimentRefused",
    "reevaluate", "run_experiment",
]
