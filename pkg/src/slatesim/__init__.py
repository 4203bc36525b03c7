"""Slate recommendation user simulator, baseline agents, metrics, and harness.

The package simulates a short-video style recommendation loop: a pretrained
immediate-response model scores slates and samples multi-behavior feedback, a
temper budget ends sessions, and a geometric return-time model spans
sessions. Baseline agents (random, collaborative filtering, A2C, DDPG, TD3,
CEM) train against the simulator at three task levels (single request, whole
session, cross-session retention), and a config-driven harness reproduces the
pipeline end to end.
"""

from .core import (
    BehaviorSchema, FeedbackBundle, ItemCatalog, Observation, SlateAction,
    UserCatalog, UserProfile, KUAIRAND_SCHEMA, ML1M_SCHEMA, encode_profile,
    validate_slate,
)
from .data import (
    LogDataset, SyntheticConfig, kcore_filter, parse_log, segment_sessions,
    split_train_test, summarize_distributions, synth_generate,
)
from .env import (
    BatchRecEnv, EnvConfig, RecEnv, RetentionParams, TrajectoryLogger,
    fit_global_bias, random_slate, reward_func, sample_return_day,
)
from .metrics import MetricsReport, auc, coverage, ild, l_reward, session_metrics
from .uirm import (
    BehaviorLikelihood, PretrainConfig, UirmConfig, UirmModel, evaluate_auc,
    item_correlation, pretrain, sample_feedback,
)
from .harness import (
    ExperimentConfig, default_config, load_config, run_experiment, run_sweep,
)

__version__ = "0.1.0"

__all__ = [
    "BehaviorSchema", "FeedbackBundle", "ItemCatalog", "Observation",
    "SlateAction", "UserCatalog", "UserProfile", "KUAIRAND_SCHEMA",
    "ML1M_SCHEMA", "encode_profile", "validate_slate",
    "LogDataset", "SyntheticConfig", "kcore_filter", "parse_log",
    "segment_sessions", "split_train_test", "summarize_distributions",
    "synth_generate",
    "BatchRecEnv", "EnvConfig", "RecEnv", "RetentionParams", "TrajectoryLogger",
    "fit_global_bias", "random_slate", "reward_func", "sample_return_day",
    "MetricsReport", "auc", "coverage", "ild", "l_reward", "session_metrics",
    "BehaviorLikelihood", "PretrainConfig", "UirmConfig", "UirmModel",
    "evaluate_auc", "item_correlation", "pretrain", "sample_feedback",
    "ExperimentConfig", "default_config", "load_config", "run_experiment",
    "run_sweep",
    "__version__",
]
