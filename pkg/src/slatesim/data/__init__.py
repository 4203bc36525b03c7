"""Data ingestion: parsing, filtering, sessionization, splits, synthetic logs."""

from .log import (
    ColumnSpec, KUAIRAND_COLUMNS, ML1M_COLUMNS, LogDataset, ParseResult,
    Sessions, build_dataset, datasets_equal, load_dataset, parse_log,
    save_dataset,
)
from .ops import kcore_filter, merge_user_logs, segment_sessions, split_train_test
from .synth import (
    SyntheticConfig, SyntheticGroundTruth, preference_score,
    sample_behavior_bits, synth_generate, true_probability,
)
from .summary import (
    DistributionReport, empirical_mean_return_day, return_day_gaps,
    summarize_distributions,
)

__all__ = [
    "ColumnSpec", "KUAIRAND_COLUMNS", "ML1M_COLUMNS", "LogDataset", "ParseResult",
    "Sessions", "build_dataset", "datasets_equal", "load_dataset", "parse_log",
    "save_dataset",
    "kcore_filter", "merge_user_logs", "segment_sessions", "split_train_test",
    "SyntheticConfig", "SyntheticGroundTruth", "preference_score",
    "sample_behavior_bits", "synth_generate", "true_probability",
    "DistributionReport", "empirical_mean_return_day", "return_day_gaps",
    "summarize_distributions",
]
