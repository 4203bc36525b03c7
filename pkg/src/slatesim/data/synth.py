"""Synthetic interaction logs with known logistic ground truth."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import BehaviorSchema, KUAIRAND_SCHEMA, MS_PER_DAY, DEFAULT_MAX_RETURN_DAY
from .log import LogDataset, build_dataset
from .ops import segment_sessions

# Logistic slopes/offsets chosen so base rates fall off from click (most
# frequent positive) to forward, with hate rarest.
_DEFAULT_SCALES = (4.0, 4.0, 4.0, 4.0, 4.0, 4.0, -4.0)
_DEFAULT_BIASES = (-2.97, -4.09, -6.59, -7.95, -9.39, -10.51, -11.3)


@dataclass(frozen=True)
class SyntheticConfig:
    n_users: int
    n_items: int
    days: int
    seed: int
    latent_dim: int = 16
    session_len: int = 10
    schema: BehaviorSchema = KUAIRAND_SCHEMA
    behavior_scales: tuple[float, ...] = _DEFAULT_SCALES
    behavior_biases: tuple[float, ...] = _DEFAULT_BIASES
    p_ret_range: tuple[float, float] = (0.35, 0.75)
    max_return_day: int = DEFAULT_MAX_RETURN_DAY

    def __post_init__(self):
        if min(self.n_users, self.n_items, self.days, self.session_len, self.latent_dim) < 1:
            raise ValueError("sizes must be positive")
        if len(self.behavior_scales) != self.schema.b or len(self.behavior_biases) != self.schema.b:
            raise ValueError("behavior scales/biases must match the schema length")
        lo, hi = self.p_ret_range
        if not (0.0 < lo <= hi <= 1.0):
            raise ValueError("p_ret_range must lie in (0, 1]")


@dataclass(frozen=True)
class SyntheticGroundTruth:
    """Latent vectors and logistic parameters behind a generated log."""

    user_vectors: np.ndarray    # [n_users, m]
    item_vectors: np.ndarray    # [n_items, m]
    behavior_scales: np.ndarray  # [b]
    behavior_biases: np.ndarray  # [b]
    p_ret: np.ndarray           # [n_users] true next-day return probability

    def __post_init__(self):
        if np.any(self.p_ret <= 0.0) or np.any(self.p_ret > 1.0):
            raise ValueError("p_ret must lie in (0, 1]")
        if self.user_vectors.shape[1] != self.item_vectors.shape[1]:
            raise ValueError("latent dimensions must match")


def preference_score(gt: SyntheticGroundTruth, user: int, items: np.ndarray) -> np.ndarray:
    """Normalized dot product between one user vector and given item vectors."""
    m = gt.user_vectors.shape[1]
    return (gt.item_vectors[items] @ gt.user_vectors[user]) / np.sqrt(m)


def true_probability(gt: SyntheticGroundTruth, user: int, items) -> np.ndarray:
    """Ground-truth behavior probabilities, shape [len(items), b]."""
    items = np.atleast_1d(np.asarray(items, dtype=np.int64))
    s = preference_score(gt, user, items)
    logits = s[:, None] * gt.behavior_scales[None, :] + gt.behavior_biases[None, :]
    return 1.0 / (1.0 + np.exp(-logits))


def sample_behavior_bits(gt: SyntheticGroundTruth, user: int, items,
                         rng: np.random.Generator) -> np.ndarray:
    """Draw independent Bernoulli feedback bits for one user's exposures."""
    probs = true_probability(gt, user, items)
    return (rng.random(probs.shape) < probs).astype(np.int8)


def synth_generate(config: SyntheticConfig) -> tuple[LogDataset, SyntheticGroundTruth]:
    """Generate a fully seed-deterministic log plus its ground truth.

    Each user starts on day 0 or 1, interacts with `session_len` uniformly
    random items per active day, and returns after a gap drawn geometric
    from their true next-day probability, clamped at `max_return_day`.
    User profile features and catalog item features expose the latent
    vectors, so the log is learnable from observable inputs.
    """
    rng = np.random.default_rng(config.seed)
    m = config.latent_dim
    user_vecs = rng.normal(size=(config.n_users, m))
    item_vecs = rng.normal(size=(config.n_items, m))
    lo, hi = config.p_ret_range
    p_ret = lo + (hi - lo) * rng.random(config.n_users)
    gt = SyntheticGroundTruth(
        user_vectors=user_vecs,
        item_vectors=item_vecs,
        behavior_scales=np.asarray(config.behavior_scales, dtype=np.float64),
        behavior_biases=np.asarray(config.behavior_biases, dtype=np.float64),
        p_ret=p_ret,
    )

    users_col, items_col, times_col, dates_col, bits_col = [], [], [], [], []
    for u in range(config.n_users):
        day = int(rng.integers(0, 2)) if config.days > 1 else 0
        while day < config.days:
            exposure = rng.integers(0, config.n_items, size=config.session_len)
            bits = sample_behavior_bits(gt, u, exposure, rng)
            base_ts = day * MS_PER_DAY + u
            for i in range(config.session_len):
                users_col.append(u)
                items_col.append(int(exposure[i]))
                times_col.append(base_ts + 60_000 * i)
                dates_col.append(day)
                bits_col.append(bits[i])
            if p_ret[u] >= 1.0:
                gap = 1
            else:
                gap = min(int(rng.geometric(p_ret[u])), config.max_return_day)
            day += gap

    dataset = build_dataset(
        users_col, items_col, times_col, dates_col, np.stack(bits_col),
        config.schema,
        user_features=user_vecs.astype(np.float32),
        item_features=item_vecs.astype(np.float32),
        user_id_order=np.arange(config.n_users, dtype=np.int64),
        item_id_order=np.arange(config.n_items, dtype=np.int64),
    )
    return segment_sessions(dataset), gt
