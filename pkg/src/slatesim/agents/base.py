"""Agent interface, observation featurization, and hyper-action decoding."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from ..core import BehaviorSchema, ItemCatalog, Observation, SlateAction


@dataclass(frozen=True)
class Transition:
    """One environment interaction as stored for training."""

    state: np.ndarray            # featurized observation
    hyper_action: np.ndarray | None
    action: SlateAction
    reward: float
    next_state: np.ndarray
    done: bool
    return_day: int


class Agent(ABC):
    """Policy facade: emit slates, ingest transitions, run parameter updates."""

    @abstractmethod
    def act(self, obs: Observation, explore: bool = False) -> SlateAction:
        """Return a valid slate for the observation."""

    def act_with_vector(self, obs: Observation, explore: bool = False
                        ) -> tuple[SlateAction, np.ndarray | None]:
        """Slate plus the continuous hyper-action that produced it (if any)."""
        return self.act(obs, explore), None

    def act_batch(self, observations, explore: bool = False, states=None
                  ) -> tuple[list[SlateAction], list[np.ndarray | None]]:
        """Vectorized act_with_vector; overridden where batching pays off.

        `states` may carry pre-featurized observations for agents that use
        them; others ignore it.
        """
        pairs = [self.act_with_vector(o, explore) for o in observations]
        return [p[0] for p in pairs], [p[1] for p in pairs]

    def observe(self, transition: Transition) -> None:
        """Ingest one transition; no-op for non-learning agents."""

    def update(self) -> dict[str, float]:
        """Run one training update; returns named loss scalars (may be empty)."""
        return {}


class ObservationFeaturizer:
    """Deterministic observation -> vector encoding for agent networks.

    Concatenates the profile features with three history summaries in item
    embedding space (mean over all history items, mean over items with any
    positive feedback, mean over items with negative feedback) and the
    history fill fraction.
    """

    def __init__(self, item_embeddings: np.ndarray, feature_dim: int,
                 schema: BehaviorSchema):
        self.embeddings = np.asarray(item_embeddings, dtype=np.float32)
        self.embed_dim = self.embeddings.shape[1]
        self.feature_dim = feature_dim
        self.schema = schema
        self._pos = list(schema.positive_indices)
        self._neg = schema.negative_index
        self.dim = feature_dim + 3 * self.embed_dim + 1

    def __call__(self, obs: Observation) -> np.ndarray:
        out = np.zeros(self.dim, dtype=np.float32)
        f = self.feature_dim
        out[:f] = obs.profile.dense_features
        cap = obs.history_items.shape[0]
        n = obs.history_len
        if n > 0:
            items = obs.history_items[cap - n:]
            fb = obs.history_feedback[cap - n:]
            emb = self.embeddings[items]
            d = self.embed_dim
            out[f:f + d] = emb.mean(axis=0)
            pos_mask = fb[:, self._pos].any(axis=1)
            if pos_mask.any():
                out[f + d:f + 2 * d] = emb[pos_mask].mean(axis=0)
            if self._neg is not None:
                neg_mask = fb[:, self._neg] == 1
                if neg_mask.any():
                    out[f + 2 * d:f + 3 * d] = emb[neg_mask].mean(axis=0)
        out[-1] = n / cap
        return out


def top_k_by_score(scores: np.ndarray, k: int) -> tuple[int, ...]:
    """Indices of the k best scores; ties break toward lower indices."""
    order = np.lexsort((np.arange(scores.shape[0]), -scores))
    return tuple(int(i) for i in order[:k])


def hyperaction_to_slate(vector: np.ndarray, catalog: ItemCatalog, k: int,
                         noise_scale: float = 0.0,
                         rng: np.random.Generator | None = None,
                         embeddings: np.ndarray | None = None) -> SlateAction:
    """Decode a continuous hyper-action to the top-k items by dot product.

    Optional Gaussian exploration noise perturbs the vector first. Ties break
    toward lower item ids. `embeddings` overrides the catalog features as the
    scoring space.
    """
    if k > catalog.n_items:
        raise ValueError("slate size exceeds the catalog")
    emb = catalog.item_features if embeddings is None else embeddings
    v = np.asarray(vector, dtype=np.float64)
    if v.shape[0] != emb.shape[1]:
        raise ValueError("hyper-action width does not match the embedding space")
    if noise_scale > 0.0:
        if rng is None:
            raise ValueError("exploration noise needs an rng")
        v = v + rng.normal(0.0, noise_scale, size=v.shape)
    scores = emb.astype(np.float64) @ v
    return SlateAction(top_k_by_score(scores, k))


class RandomAgent(Agent):
    """Uniform random distinct-item slates."""

    def __init__(self, n_items: int, k: int, seed: int = 0):
        if k > n_items:
            raise ValueError("slate size exceeds the catalog")
        self.n_items = n_items
        self.k = k
        self.rng = np.random.default_rng(seed)

    def act(self, obs: Observation, explore: bool = False) -> SlateAction:
        ids = self.rng.choice(self.n_items, size=self.k, replace=False)
        return SlateAction(tuple(int(i) for i in ids))
