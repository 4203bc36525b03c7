"""Shared domain types: users, items, interactions, observations, slates, feedback."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

# History window: most recent interactions kept per user, left-truncated.
DEFAULT_HISTORY_CAP = 50
# Maximum return day; geometric draws beyond this are clamped.
DEFAULT_MAX_RETURN_DAY = 10

MS_PER_DAY = 86_400_000


@dataclass(frozen=True)
class BehaviorSchema:
    """Ordered immediate-feedback signals and their reward weights."""

    names: tuple[str, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if len(self.names) != len(self.weights):
            raise ValueError("names and weights must have equal length")
        if len(self.names) == 0:
            raise ValueError("behavior schema must not be empty")
        if len(set(self.names)) != len(self.names):
            raise ValueError("behavior names must be unique")
        if not all(np.isfinite(w) for w in self.weights):
            raise ValueError("behavior weights must be finite")
        if sum(1 for w in self.weights if w < 0) > 1:
            raise ValueError("at most one behavior may carry a negative weight")

    @property
    def b(self) -> int:
        return len(self.names)

    @property
    def negative_index(self) -> int | None:
        """Index of the single negative-weight behavior, if any."""
        for i, w in enumerate(self.weights):
            if w < 0:
                return i
        return None

    @property
    def positive_indices(self) -> tuple[int, ...]:
        return tuple(i for i, w in enumerate(self.weights) if w > 0)

    @property
    def max_step_reward(self) -> float:
        """Largest per-position weighted reward (all positive signals fired)."""
        return float(sum(w for w in self.weights if w > 0))

    def index(self, name: str) -> int:
        return self.names.index(name)


KUAIRAND_BEHAVIORS = ("click", "long_view", "like", "comment", "follow", "forward", "hate")
KUAIRAND_SCHEMA = BehaviorSchema(
    names=KUAIRAND_BEHAVIORS,
    weights=(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, -1.0),
)

ML1M_SCHEMA = BehaviorSchema(names=("like", "hate"), weights=(1.0, -1.0))


@dataclass(frozen=True)
class UserProfile:
    """Static per-user profile: opaque id plus a fixed-length dense feature vector."""

    user_id: int
    dense_features: np.ndarray

    def __post_init__(self):
        if self.dense_features.ndim != 1 or self.dense_features.size < 1:
            raise ValueError("dense_features must be a non-empty 1-D vector")

    @property
    def feature_dim(self) -> int:
        return int(self.dense_features.shape[0])


@dataclass(frozen=True)
class UserCatalog:
    """All users of a dataset, re-indexed to 0..n-1; original ids kept in `ids`."""

    ids: np.ndarray            # [n] original ids
    dense_features: np.ndarray  # [n, F] float32

    def __post_init__(self):
        if len(np.unique(self.ids)) != len(self.ids):
            raise ValueError("duplicate user ids in catalog")
        if self.dense_features.ndim != 2 or self.dense_features.shape[0] != self.ids.shape[0]:
            raise ValueError("dense_features must be [n_users, feature_dim]")
        if self.dense_features.shape[1] < 1:
            raise ValueError("feature_dim must be positive")

    @property
    def n_users(self) -> int:
        return int(self.ids.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.dense_features.shape[1])

    def profile(self, index: int) -> UserProfile:
        return UserProfile(int(self.ids[index]), self.dense_features[index])


@dataclass(frozen=True)
class ItemCatalog:
    """All items of a dataset, re-indexed to 0..n-1; original ids kept in `ids`."""

    ids: np.ndarray           # [n] original ids
    item_features: np.ndarray  # [n, m] float32

    def __post_init__(self):
        if len(np.unique(self.ids)) != len(self.ids):
            raise ValueError("duplicate item ids in catalog")
        if self.item_features.ndim != 2 or self.item_features.shape[0] != self.ids.shape[0]:
            raise ValueError("item_features must be [n_items, embedding_dim]")

    @property
    def n_items(self) -> int:
        return int(self.ids.shape[0])

    @property
    def embedding_dim(self) -> int:
        return int(self.item_features.shape[1])


@dataclass(frozen=True)
class InteractionRecord:
    """One logged exposure: user, item, time, and the multi-behavior bit vector."""

    user_id: int
    item_id: int
    timestamp: int  # milliseconds since epoch
    date: int       # integer day key
    behaviors: np.ndarray  # [b] 0/1


@dataclass(frozen=True)
class Observation:
    """Agent input for one request: static profile plus recent history.

    History arrays are right-aligned: the most recent interaction sits at the
    last position and padding occupies the leading slots.
    """

    profile: UserProfile
    history_items: np.ndarray     # [H] int64, internal item indices
    history_feedback: np.ndarray  # [H, b] 0/1
    history_len: int

    def __post_init__(self):
        if self.history_items.shape[0] != self.history_feedback.shape[0]:
            raise ValueError("history arrays must be aligned")
        if not 0 <= self.history_len <= self.history_items.shape[0]:
            raise ValueError("history_len out of range")

    @property
    def mask(self) -> np.ndarray:
        """True at filled history positions, False at padding."""
        cap = self.history_items.shape[0]
        return np.arange(cap) >= cap - self.history_len


@dataclass(frozen=True)
class SlateAction:
    """Ordered recommendation list of K internal item indices."""

    item_ids: tuple[int, ...]

    @property
    def k(self) -> int:
        return len(self.item_ids)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.item_ids, dtype=np.int64)


@dataclass(frozen=True)
class FeedbackBundle:
    """Simulator response to one slate: immediate bits, leave bit, return day, reward."""

    immediate: np.ndarray  # [b, K] 0/1
    leave: int
    return_day: int
    reward: float          # normalized step reward

    def __post_init__(self):
        if self.leave not in (0, 1):
            raise ValueError("leave must be 0 or 1")
        if self.leave == 0 and self.return_day != 0:
            raise ValueError("return_day must be 0 when leave=0")
        if self.leave == 1 and self.return_day < 1:
            raise ValueError("return_day must be >= 1 when leave=1")


def validate_slate(slate: SlateAction, catalog: ItemCatalog, k: int | None = None) -> str | None:
    """Check slate invariants; return None if valid, else the first violation."""
    if catalog.n_items == 0:
        raise ValueError("catalog is empty")
    expected = slate.k if k is None else k
    if slate.k != expected or slate.k < 1:
        return "wrong length"
    if len(set(slate.item_ids)) != slate.k:
        return "duplicate item"
    for item in slate.item_ids:
        if not 0 <= item < catalog.n_items:
            return "unknown item"
    return None


@dataclass(frozen=True)
class FieldSpec:
    """One raw profile field: categorical with fixed levels, or numeric passthrough."""

    name: str
    kind: str = "categorical"
    levels: tuple = ()

    def __post_init__(self):
        if self.kind not in ("categorical", "numeric"):
            raise ValueError(f"unknown field kind {self.kind!r}")
        if self.kind == "categorical" and len(self.levels) == 0:
            raise ValueError("categorical field needs at least one level")

    @property
    def width(self) -> int:
        return len(self.levels) if self.kind == "categorical" else 1


@dataclass(frozen=True)
class FeatureSpec:
    """Ordered field specs defining the dense profile encoding."""

    fields: tuple[FieldSpec, ...]

    @property
    def dim(self) -> int:
        return sum(f.width for f in self.fields)


def fit_feature_spec(rows: Sequence[Mapping], field_names: Sequence[str],
                     numeric: Sequence[str] = ()) -> FeatureSpec:
    """Build a FeatureSpec from observed rows; categorical levels are sorted uniques."""
    numeric_set = set(numeric)
    fields = []
    for name in field_names:
        if name in numeric_set:
            fields.append(FieldSpec(name, kind="numeric"))
        else:
            levels = sorted({str(r[name]) for r in rows if name in r})
            if not levels:
                raise ValueError(f"no values observed for field {name!r}")
            fields.append(FieldSpec(name, kind="categorical", levels=tuple(levels)))
    return FeatureSpec(tuple(fields))


def encode_profile(raw_fields: Mapping, spec: FeatureSpec) -> np.ndarray:
    """Encode a raw record into the fixed dense vector defined by `spec`.

    Categorical values are one-hot within their field segment; values not in
    the field's levels map to the reserved all-zero segment. Deterministic.
    """
    missing = [f.name for f in spec.fields if f.name not in raw_fields]
    if missing:
        raise ValueError(f"missing fields: {missing}")
    out = np.zeros(spec.dim, dtype=np.float32)
    offset = 0
    for f in spec.fields:
        value = raw_fields[f.name]
        if f.kind == "numeric":
            out[offset] = float(value)
        else:
            key = str(value)
            if key in f.levels:
                out[offset + f.levels.index(key)] = 1.0
        offset += f.width
    return out


# KuaiRand user table: the six encrypted one-hot profile columns used for encoding.
KUAIRAND_PROFILE_FIELDS = (
    "onehot_feat0", "onehot_feat1", "onehot_feat6",
    "onehot_feat9", "onehot_feat10", "onehot_feat11",
)
