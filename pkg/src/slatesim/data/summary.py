"""Distribution summaries of an interaction log."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..core import DEFAULT_MAX_RETURN_DAY
from .log import LogDataset
from .ops import segment_sessions

MS_PER_HOUR = 3_600_000


@dataclass(frozen=True)
class DistributionReport:
    """Per-behavior rates plus request-gap and return-day histograms."""

    behavior_rates: dict[str, float]
    same_day_gap_hours: dict[int, int]
    cross_day_gap_hours: dict[int, int]
    return_day_counts: dict[int, int]   # day 1..D, D bucket holds the clamped tail
    return_day_pmf: dict[int, float]
    mean_return_day: float

    def to_jsonl(self) -> str:
        """One structured record per line."""
        lines = []
        for name, rate in self.behavior_rates.items():
            lines.append(json.dumps({"kind": "behavior_rate", "key": name, "value": rate},
                                    sort_keys=True))
        for kind, hist in (("same_day_gap_hours", self.same_day_gap_hours),
                           ("cross_day_gap_hours", self.cross_day_gap_hours),
                           ("return_day_counts", self.return_day_counts)):
            for key in sorted(hist):
                lines.append(json.dumps({"kind": kind, "key": key, "value": hist[key]},
                                        sort_keys=True))
        for day in sorted(self.return_day_pmf):
            lines.append(json.dumps({"kind": "return_day_pmf", "key": day,
                                     "value": self.return_day_pmf[day]}, sort_keys=True))
        lines.append(json.dumps({"kind": "mean_return_day", "key": "all",
                                 "value": self.mean_return_day}, sort_keys=True))
        return "\n".join(lines) + "\n"


def return_day_gaps(dataset: LogDataset, max_day: int = DEFAULT_MAX_RETURN_DAY) -> np.ndarray:
    """Per-user day gaps between consecutive sessions, clamped at max_day."""
    ds = dataset if dataset.sessions is not None else segment_sessions(dataset)
    s = ds.sessions
    gaps = []
    same_user = s.user[1:] == s.user[:-1]
    diffs = s.date[1:] - s.date[:-1]
    gaps = diffs[same_user]
    gaps = np.clip(gaps, 1, max_day)
    return gaps.astype(np.int64)


def empirical_mean_return_day(dataset: LogDataset,
                              max_day: int = DEFAULT_MAX_RETURN_DAY) -> float:
    gaps = return_day_gaps(dataset, max_day)
    if gaps.size == 0:
        raise ValueError("no consecutive sessions to measure")
    return float(gaps.mean())


def summarize_distributions(dataset: LogDataset,
                            max_day: int = DEFAULT_MAX_RETURN_DAY) -> DistributionReport:
    """Behavior positive rates, request-gap histograms, and return-day pmf."""
    ds = dataset if dataset.sessions is not None else segment_sessions(dataset)
    rates = {name: float(ds.behaviors[:, i].mean()) for i, name in enumerate(ds.schema.names)}

    same_user = ds.user_idx[1:] == ds.user_idx[:-1]
    same_date = ds.dates[1:] == ds.dates[:-1]
    gap_ms = ds.timestamps[1:] - ds.timestamps[:-1]

    same_day = gap_ms[same_user & same_date] // MS_PER_HOUR
    cross_day = gap_ms[same_user & ~same_date] // MS_PER_HOUR
    same_hist = {int(k): int(v) for k, v in zip(*np.unique(same_day, return_counts=True))}
    cross_hist = {int(k): int(v) for k, v in zip(*np.unique(cross_day, return_counts=True))}

    gaps = return_day_gaps(ds, max_day)
    counts = {d: 0 for d in range(1, max_day + 1)}
    for k, v in zip(*np.unique(gaps, return_counts=True)):
        counts[int(k)] = int(v)
    total = max(1, gaps.size)
    pmf = {d: counts[d] / total for d in counts}
    mean_rd = float(gaps.mean()) if gaps.size else float("nan")

    return DistributionReport(
        behavior_rates=rates,
        same_day_gap_hours=same_hist,
        cross_day_gap_hours=cross_hist,
        return_day_counts=counts,
        return_day_pmf=pmf,
        mean_return_day=mean_rd,
    )
