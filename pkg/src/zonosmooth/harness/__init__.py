"""Monte-Carlo experiment harness: configuration, driver and CLI."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config_text
from .experiment import (
    OracleReport,
    RunRecord,
    TrialRecord,
    mse_series,
    point_estimate,
    run_experiment,
    run_oracle_check,
    run_rts_tuning,
    run_trial,
    write_outputs,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config_text",
    "OracleReport",
    "RunRecord",
    "TrialRecord",
    "mse_series",
    "point_estimate",
    "run_experiment",
    "run_oracle_check",
    "run_rts_tuning",
    "run_trial",
    "write_outputs",
]
