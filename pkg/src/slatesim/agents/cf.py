"""Collaborative-filtering baseline: two-tower scorer trained point-wise on clicks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import ItemCatalog, Observation, SlateAction
from ..data import LogDataset
from ..nn import AdamState, Mlp, ParamStore, accumulate_grads, bce_with_logits
from ..nn.layers import affine_bwd, embedding_bwd, embedding_lookup
from .base import Agent


@dataclass(frozen=True)
class CfConfig:
    dim: int = 32
    lr: float = 5e-3
    l2: float = 1e-5
    epochs: int = 5
    batch_size: int = 64
    behavior: str = "click"
    seed: int = 0


class CfModel:
    """User tower (profile MLP) against an item embedding table.

    The table carries one extra shared row used to score cold item ids that
    fall outside the catalog.
    """

    def __init__(self, n_items: int, feature_dim: int, config: CfConfig = CfConfig()):
        self.n_items = n_items
        self.feature_dim = feature_dim
        self.config = config
        store = ParamStore(seed=config.seed)
        self.tower = Mlp(store, "user", (feature_dim, 2 * feature_dim, config.dim))
        store.add("item_emb", (n_items + 1, config.dim), init="embed")
        self.store = store

    def user_vectors(self, profiles: np.ndarray) -> np.ndarray:
        params = {k: self.store[k] for k in self.store.names()}
        out, _ = self.tower.forward(params, np.atleast_2d(profiles))
        return out

    def _item_rows(self, item_ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(item_ids, dtype=np.int64)
        return np.where((ids >= 0) & (ids < self.n_items), ids, self.n_items)

    def score(self, profile: np.ndarray, item_ids) -> np.ndarray:
        """Dot-product scores; unknown ids hit the shared cold row."""
        u = self.user_vectors(profile[None])[0]
        rows = self._item_rows(np.atleast_1d(np.asarray(item_ids)))
        return self.store["item_emb"][rows] @ u

    def score_catalog(self, profile: np.ndarray) -> np.ndarray:
        u = self.user_vectors(profile[None])[0]
        return self.store["item_emb"][: self.n_items] @ u

    def loss_and_grads(self, params, batch):
        profiles, items, labels = batch
        u, cache = self.tower.forward(params, profiles)
        rows = self._item_rows(items)
        e = embedding_lookup(params["item_emb"], rows)
        logits = (u * e).sum(axis=1)
        loss, dlogits = bce_with_logits(logits, labels)
        du = dlogits[:, None] * e
        de = dlogits[:, None] * u
        grads = {"item_emb": embedding_bwd(de, rows, params["item_emb"].shape)}
        tower_grads, _ = self.tower.backward(params, cache, du)
        accumulate_grads(grads, tower_grads)
        return loss, grads


def cf_train(train: LogDataset, config: CfConfig = CfConfig()) -> tuple[CfModel, list[float]]:
    """Fit the scorer on logged exposures of the configured behavior."""
    if train.n_records == 0:
        raise ValueError("empty training log")
    model = CfModel(train.items.n_items, train.users.feature_dim, config)
    beh = train.schema.index(config.behavior)
    profiles = train.users.dense_features[train.user_idx]
    items = train.item_idx.astype(np.int64)
    labels = train.behaviors[:, beh].astype(np.float32)
    opt = AdamState(model.store, lr=config.lr, l2=config.l2)
    rng = np.random.default_rng(config.seed)
    losses = []
    n = train.n_records
    for _ in range(config.epochs):
        order = rng.permutation(n)
        total, batches = 0.0, 0
        params = {k: model.store[k] for k in model.store.names()}
        for lo in range(0, n, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            loss, grads = model.loss_and_grads(
                params, (profiles[idx], items[idx], labels[idx]))
            opt.step(model.store, grads)
            params = {k: model.store[k] for k in model.store.names()}
            total += loss
            batches += 1
        losses.append(total / max(1, batches))
    return model, losses


class CfAgent(Agent):
    """Deterministic top-k slates by two-tower score."""

    def __init__(self, model: CfModel, k: int):
        if k > model.n_items:
            raise ValueError("slate size exceeds the catalog")
        self.model = model
        self.k = k

    def act(self, obs: Observation, explore: bool = False) -> SlateAction:
        scores = self.model.score_catalog(obs.profile.dense_features)
        order = np.lexsort((np.arange(scores.shape[0]), -scores))
        return SlateAction(tuple(int(i) for i in order[: self.k]))
