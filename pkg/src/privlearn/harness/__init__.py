"""Experiment surface: configuration, synthetic data, scoring and verifier suites."""
from __future__ import annotations

from .config import ConfigError, ExperimentConfig, load_config, thread_count
from .experiment import (
    AccuracyReport,
    AnswerTable,
    BernoulliIID,
    Clustered,
    FromFile,
    RatioReport,
    brute_force_answers,
    dp_ratio_smoke,
    gen_database,
    rescore,
    run_experiment,
)
from .verify import SuiteResult, run_suites
