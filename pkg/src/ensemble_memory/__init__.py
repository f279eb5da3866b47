"""Atomic-ensemble quantum memory: write, store, retrieve, detect, analyze."""

from .core import (
    ConfigError,
    CountRecord,
    Estimate,
    ExperimentConfig,
    PulseProfile,
    SolverError,
    SpinWaveProfile,
    StatsSummary,
    ValidatedConfig,
    config_from_dict,
    config_to_json,
    load_config,
    validate,
)
from .sampler import TrialBatch, prepare, run_batch, sample_trial

__all__ = [
    "ConfigError",
    "CountRecord",
    "Estimate",
    "ExperimentConfig",
    "PulseProfile",
    "SolverError",
    "SpinWaveProfile",
    "StatsSummary",
    "TrialBatch",
    "ValidatedConfig",
    "config_from_dict",
    "config_to_json",
    "load_config",
    "prepare",
    "run_batch",
    "sample_trial",
    "validate",
]
