"""Experiment orchestration: configs, sweeps, result files and the CLI."""

from .config import ExperimentConfig, load_config
from .experiment import (
    PairedSweepResult,
    run_cooperation_ablation,
    run_point,
    run_snr_sweep,
    run_trial,
    run_user_sweep,
)
from .results import SweepRecord, SweepResult, emit_results, parse_results

__all__ = [
    "ExperimentConfig",
    "load_config",
    "PairedSweepResult",
    "run_cooperation_ablation",
    "run_point",
    "run_snr_sweep",
    "run_trial",
    "run_user_sweep",
    "SweepRecord",
    "SweepResult",
    "emit_results",
    "parse_results",
]
