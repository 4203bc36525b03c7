"""Evaluation metrics over trajectories: list rewards, coverage, diversity,
session statistics, retention statistics, and rank AUC."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .core import BehaviorSchema, ItemCatalog, SlateAction


def auc(scores, labels) -> float | None:
    """Mann-Whitney rank AUC with ties counted 0.5; None if one class absent."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels != 0
    n_pos = int(pos.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def slate_reward(feedback: np.ndarray, schema: BehaviorSchema) -> float:
    """Mean over slate positions of the weighted behavior sum (raw scale)."""
    fb = np.asarray(feedback, dtype=np.float64)
    weights = np.asarray(schema.weights, dtype=np.float64)
    return float((weights @ fb).mean())


def l_reward(feedback_batch, schema: BehaviorSchema) -> tuple[float, float]:
    """(average, max) per-slate list reward across a mini-batch of feedback."""
    values = [slate_reward(fb, schema) for fb in feedback_batch]
    if not values:
        raise ValueError("empty batch")
    return float(np.mean(values)), float(np.max(values))


def coverage(slates) -> int:
    """Number of distinct items exposed across the batch."""
    exposed: set[int] = set()
    for slate in slates:
        ids = slate.item_ids if isinstance(slate, SlateAction) else slate
        exposed.update(int(i) for i in ids)
    return len(exposed)


def ild(slates, embeddings) -> float:
    """Mean intra-list cosine dissimilarity (1 - cos) over ordered item pairs.

    `embeddings` is an [n_items, d] matrix or an ItemCatalog; zero-norm
    vectors count as orthogonal to everything.
    """
    if isinstance(embeddings, ItemCatalog):
        embeddings = embeddings.item_features
    emb = np.asarray(embeddings, dtype=np.float64)
    values = []
    for slate in slates:
        ids = slate.item_ids if isinstance(slate, SlateAction) else slate
        vecs = emb[np.asarray(ids, dtype=np.int64)]
        k = vecs.shape[0]
        if k < 2:
            values.append(0.0)
            continue
        norms = np.linalg.norm(vecs, axis=1, keepdims=True)
        unit = np.divide(vecs, norms, out=np.zeros_like(vecs), where=norms > 0)
        cos = unit @ unit.T
        total = cos.sum() - np.trace(cos)
        values.append(1.0 - total / (k * (k - 1)))
    if not values:
        raise ValueError("empty batch")
    return float(np.mean(values))


@dataclass(frozen=True)
class SessionMetrics:
    depth: float
    avg_reward: float
    total_reward: float


def session_metrics(steps) -> SessionMetrics:
    """Depth, mean step reward, and mean per-session total reward.

    `steps` is a sequence of trajectory records (dicts with at least
    episode, session_index, and reward keys).
    """
    if not steps:
        raise ValueError("empty trajectory")
    sessions: dict[tuple, list[float]] = {}
    for rec in steps:
        key = (rec["episode"], rec["session_index"])
        sessions.setdefault(key, []).append(float(rec["reward"]))
    depths = [len(v) for v in sessions.values()]
    totals = [sum(v) for v in sessions.values()]
    all_rewards = [r for v in sessions.values() for r in v]
    return SessionMetrics(
        depth=float(np.mean(depths)),
        avg_reward=float(np.mean(all_rewards)),
        total_reward=float(np.mean(totals)),
    )


def retention_metrics(steps) -> tuple[float, float]:
    """(mean return day, next-day return fraction) over completed sessions."""
    days = [int(rec["return_day"]) for rec in steps if rec.get("leave")]
    if not days:
        raise ValueError("no completed sessions in trajectory")
    days = np.asarray(days, dtype=np.float64)
    return float(days.mean()), float((days == 1).mean())


METRIC_KEYS = (
    "avg_l_reward", "max_l_reward", "coverage", "ild", "depth",
    "avg_reward", "total_reward", "return_day", "user_retention",
)


@dataclass(frozen=True)
class MetricsReport:
    """Mean/std per metric across evaluation seeds, plus per-behavior AUC."""

    metrics: dict[str, dict[str, float]]
    auc_per_behavior: dict[str, float | None]

    def to_json(self) -> str:
        payload = {"metrics": self.metrics, "auc": self.auc_per_behavior}
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    def to_flat_table(self) -> str:
        lines = ["metric\tmean\tstd"]
        for name in sorted(self.metrics):
            entry = self.metrics[name]
            lines.append(f"{name}\t{entry['mean']!r}\t{entry['std']!r}")
        for name in sorted(self.auc_per_behavior):
            value = self.auc_per_behavior[name]
            lines.append(f"auc.{name}\t{'' if value is None else repr(value)}\t")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        payload = json.loads(text)
        return cls(metrics=payload["metrics"], auc_per_behavior=payload["auc"])

    @classmethod
    def from_seed_values(cls, per_seed: dict[str, list[float]],
                         auc_per_behavior: dict[str, float | None] | None = None
                         ) -> "MetricsReport":
        metrics = {}
        for name, values in per_seed.items():
            arr = np.asarray(values, dtype=np.float64)
            metrics[name] = {"mean": float(arr.mean()), "std": float(arr.std())}
        return cls(metrics=metrics, auc_per_behavior=dict(auc_per_behavior or {}))
