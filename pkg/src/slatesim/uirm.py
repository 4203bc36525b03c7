"""User immediate-response model: state encoding, slate scoring, feedback sampling.

The model embeds each history interaction (item embedding concatenated with
its feedback bits, projected back to the embedding width), prepends a learned
default token so empty histories still encode, runs the attention encoder,
and concatenates the pooled vector with the profile features to form the user
state. Behavior logits for a slate item are the behavior-attention weights
times the dot product of a projected state with the item embedding, minus a
correlation penalty scaled by `rho`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import BehaviorSchema, Observation, SlateAction, DEFAULT_HISTORY_CAP
from .data import LogDataset, merge_user_logs
from .metrics import auc as rank_auc
from .nn import (
    AdamState, AttentionEncoder, Mlp, ParamStore, accumulate_grads,
    bce_with_logits, read_checkpoint, sigmoid, write_checkpoint,
)
from .nn.layers import affine_map, affine_bwd, embedding_lookup, embedding_bwd


@dataclass(frozen=True)
class UirmConfig:
    embed_dim: int = 32
    hist_cap: int = DEFAULT_HISTORY_CAP
    rho: float = 0.1
    dropout: float = 0.2
    heads: int = 2
    blocks: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError("rho must be non-negative")


@dataclass(frozen=True)
class BehaviorLikelihood:
    """Per-behavior Bernoulli parameters for one slate."""

    probs: np.ndarray      # [b, K] in (0, 1)
    logits: np.ndarray     # [b, K]
    penalties: np.ndarray  # [K] >= 0


def item_correlation(embeddings: np.ndarray) -> np.ndarray:
    """Mean positive cosine similarity of each slate item to the others.

    Zero-norm embeddings count as orthogonal. A single-item slate has zero
    penalty.
    """
    emb = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    k = emb.shape[0]
    if k == 1:
        return np.zeros(1)
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    unit = np.divide(emb, norms, out=np.zeros_like(emb), where=norms > 0)
    cos = unit @ unit.T
    np.fill_diagonal(cos, 0.0)
    return np.maximum(cos, 0.0).sum(axis=1) / (k - 1)


def _item_correlation_batch(emb: np.ndarray) -> np.ndarray:
    """Vectorized penalty for slates [n, K, d]."""
    n, k, _ = emb.shape
    if k == 1:
        return np.zeros((n, 1), dtype=emb.dtype)
    norms = np.linalg.norm(emb, axis=2, keepdims=True)
    unit = np.divide(emb, norms, out=np.zeros_like(emb), where=norms > 0)
    cos = unit @ unit.transpose(0, 2, 1)
    idx = np.arange(k)
    cos[:, idx, idx] = 0.0
    return np.maximum(cos, 0.0).sum(axis=2) / (k - 1)


def sample_bits(probs: np.ndarray, rng: np.random.Generator,
                schema: BehaviorSchema) -> np.ndarray:
    """Independent Bernoulli per (behavior, position); a sampled negative
    (hate) bit forces the positive behaviors at that position to zero."""
    bits = (rng.random(probs.shape) < probs).astype(np.int8)
    neg = schema.negative_index
    if neg is not None:
        hate_on = bits[neg] == 1
        for i in schema.positive_indices:
            bits[i, hate_on] = 0
    return bits


def sample_feedback(likelihood: BehaviorLikelihood, rng: np.random.Generator,
                    schema: BehaviorSchema) -> np.ndarray:
    return sample_bits(likelihood.probs, rng, schema)


class UirmModel:
    """Trainable immediate-response model over a fixed item catalog."""

    def __init__(self, n_items: int, feature_dim: int, schema: BehaviorSchema,
                 config: UirmConfig = UirmConfig()):
        self.n_items = n_items
        self.feature_dim = feature_dim
        self.schema = schema
        self.config = config
        d = config.embed_dim
        self.state_dim = d + feature_dim

        store = ParamStore(seed=config.seed)
        store.add("item_emb", (n_items, d), init="embed")
        store.add("bos", (d,), init="embed")
        store.add_linear("fb_proj", d + schema.b, d)
        self.encoder = AttentionEncoder(
            store, "enc", dim=d, max_len=config.hist_cap + 1, heads=config.heads,
            blocks=config.blocks, dropout_rate=config.dropout)
        self.beh_head = Mlp(store, "beh", (self.state_dim, 2 * self.state_dim, schema.b),
                            dropout_rate=config.dropout)
        # open the multiplicative gate: behavior weights start near 1 so the
        # preference score pathway receives gradient from the first step
        store[f"beh.l{self.beh_head.n_layers - 1}.b"] = np.ones(schema.b, dtype=np.float32)
        store.add_linear("state_proj", self.state_dim, d)
        self.store = store

    # -- forward/backward -------------------------------------------------

    def _state_forward(self, params, hist_ids, hist_fb, mask, profile, *,
                       train=False, rng=None):
        d = self.config.embed_dim
        n = hist_ids.shape[0]
        he = embedding_lookup(params["item_emb"], hist_ids)
        tok_in = np.concatenate([he, hist_fb.astype(he.dtype)], axis=2)
        tok = affine_map(params["fb_proj.w"], params["fb_proj.b"], tok_in)
        bos = np.broadcast_to(params["bos"], (n, 1, d))
        seq = np.concatenate([bos, tok], axis=1)
        full_mask = np.concatenate([np.ones((n, 1), dtype=bool), mask], axis=1)
        pooled, enc_cache = self.encoder.forward(params, seq, full_mask,
                                                 train=train, rng=rng)
        state = np.concatenate([pooled, profile.astype(pooled.dtype)], axis=1)
        return state, (hist_ids, tok_in, enc_cache)

    def _state_backward(self, params, cache, dstate):
        hist_ids, tok_in, enc_cache = cache
        d = self.config.embed_dim
        dpooled = dstate[:, :d]
        grads, dseq = self.encoder.backward(params, enc_cache, dpooled)
        grads["bos"] = dseq[:, 0, :].sum(axis=0)
        dtok = dseq[:, 1:, :]
        dtok_in, dw, db = affine_bwd(dtok, tok_in, params["fb_proj.w"])
        grads["fb_proj.w"] = dw
        grads["fb_proj.b"] = db
        dhe = dtok_in[..., :d]
        grads["item_emb"] = embedding_bwd(dhe, hist_ids, params["item_emb"].shape)
        return grads

    def loss_and_grads(self, params, batch, *, train=False, rng=None):
        """Mean BCE over (record, behavior) cells for single exposed items.

        `batch` is (hist_ids, hist_fb, mask, profile, target_items, labels);
        the diversity penalty stays off here (point-wise objective).
        """
        hist_ids, hist_fb, mask, profile, targets, labels = batch
        state, s_cache = self._state_forward(params, hist_ids, hist_fb, mask,
                                             profile, train=train, rng=rng)
        w, beh_cache = self.beh_head.forward(params, state, train=train, rng=rng)
        us = affine_map(params["state_proj.w"], params["state_proj.b"], state)
        e_t = embedding_lookup(params["item_emb"], targets)
        c = (us * e_t).sum(axis=1)
        logits = w * c[:, None]
        loss, dlogits = bce_with_logits(logits, labels)

        dw = dlogits * c[:, None]
        dc = (dlogits * w).sum(axis=1)
        dus = dc[:, None] * e_t
        de_t = dc[:, None] * us
        grads: dict[str, np.ndarray] = {}
        grads["item_emb"] = embedding_bwd(de_t, targets, params["item_emb"].shape)
        beh_grads, dstate_a = self.beh_head.backward(params, beh_cache, dw)
        accumulate_grads(grads, beh_grads)
        dstate_b, dwsp, dbsp = affine_bwd(dus, state, params["state_proj.w"])
        accumulate_grads(grads, {"state_proj.w": dwsp, "state_proj.b": dbsp})
        state_grads = self._state_backward(params, s_cache, dstate_a + dstate_b)
        accumulate_grads(grads, state_grads)
        return loss, grads

    # -- inference ---------------------------------------------------------

    def state_batch(self, hist_ids, hist_fb, hist_len, profile) -> np.ndarray:
        """Encode n observations given as right-aligned history arrays."""
        hist_ids = np.asarray(hist_ids, dtype=np.int64)
        cap = hist_ids.shape[1]
        mask = np.arange(cap)[None, :] >= (cap - np.asarray(hist_len))[:, None]
        params = {k: self.store[k] for k in self.store.names()}
        state, _ = self._state_forward(params, hist_ids, np.asarray(hist_fb),
                                       mask, np.asarray(profile))
        return state

    def encode_state(self, obs: Observation) -> np.ndarray:
        """User state for one observation: pooled history ++ profile features."""
        return self.state_batch(obs.history_items[None], obs.history_feedback[None],
                                np.array([obs.history_len]),
                                obs.profile.dense_features[None])[0]

    def likelihood_batch(self, state: np.ndarray, slates: np.ndarray,
                         rho: float | None = None):
        """Probs/logits/penalties for n slates given n states."""
        rho = self.config.rho if rho is None else rho
        params = {k: self.store[k] for k in self.store.names()}
        w, _ = self.beh_head.forward(params, state)
        us = affine_map(params["state_proj.w"], params["state_proj.b"], state)
        e_sl = embedding_lookup(params["item_emb"], slates)
        c = np.einsum("nd,nkd->nk", us, e_sl)
        pen = _item_correlation_batch(e_sl.astype(np.float64))
        logits = w[:, :, None] * c[:, None, :] - rho * pen[:, None, :]
        return sigmoid(logits), logits, pen

    def behavior_likelihood(self, state: np.ndarray, slate: SlateAction,
                            rho: float | None = None) -> BehaviorLikelihood:
        ids = slate.as_array()
        if ids.shape[0] < 1:
            raise ValueError("slate validation failed: wrong length")
        if len(set(slate.item_ids)) != ids.shape[0]:
            raise ValueError("slate validation failed: duplicate item")
        if np.any(ids < 0) or np.any(ids >= self.n_items):
            raise ValueError("slate validation failed: unknown item")
        probs, logits, pen = self.likelihood_batch(state[None], ids[None], rho)
        return BehaviorLikelihood(probs=probs[0], logits=logits[0], penalties=pen[0])

    # -- persistence ---------------------------------------------------------

    def save(self, path) -> None:
        meta = {
            "kind": "uirm",
            "n_items": self.n_items,
            "feature_dim": self.feature_dim,
            "schema_names": list(self.schema.names),
            "schema_weights": list(self.schema.weights),
            "config": {
                "embed_dim": self.config.embed_dim, "hist_cap": self.config.hist_cap,
                "rho": self.config.rho, "dropout": self.config.dropout,
                "heads": self.config.heads, "blocks": self.config.blocks,
                "seed": self.config.seed,
            },
        }
        write_checkpoint(path, {k: self.store[k] for k in self.store.names()}, meta)

    @classmethod
    def load(cls, path) -> "UirmModel":
        arrays, meta = read_checkpoint(path)
        if meta.get("kind") != "uirm":
            raise ValueError("checkpoint does not hold an immediate-response model")
        schema = BehaviorSchema(names=tuple(meta["schema_names"]),
                                weights=tuple(meta["schema_weights"]))
        model = cls(meta["n_items"], meta["feature_dim"], schema,
                    UirmConfig(**meta["config"]))
        model.store.load_dict(arrays)
        return model


# ---------------------------------------------------------------------------
# Training example construction and pretraining.
# ---------------------------------------------------------------------------

def make_example_batch(dataset: LogDataset, positions: np.ndarray, hist_cap: int):
    """Observations reconstructed from each record's prior per-user history.

    Returns (hist_ids, hist_fb, mask, profile, targets, labels) with history
    right-aligned in a window of `hist_cap`.
    """
    pos = np.asarray(positions, dtype=np.int64)
    users = dataset.user_idx[pos]
    starts = dataset.user_offsets[users]
    hist_len = np.minimum(hist_cap, pos - starts)
    idx = pos[:, None] - hist_cap + np.arange(hist_cap)[None, :]
    mask = np.arange(hist_cap)[None, :] >= (hist_cap - hist_len)[:, None]
    idx = np.where(mask, idx, 0)
    hist_ids = dataset.item_idx[idx].astype(np.int64)
    hist_ids[~mask] = 0
    hist_fb = dataset.behaviors[idx].astype(np.float32)
    hist_fb[~mask] = 0
    profile = dataset.users.dense_features[users]
    targets = dataset.item_idx[pos].astype(np.int64)
    labels = dataset.behaviors[pos].astype(np.float32)
    return hist_ids, hist_fb, mask, profile, targets, labels


@dataclass(frozen=True)
class PretrainConfig:
    epochs: int = 10
    batch_size: int = 64
    lr: float = 5e-4
    l2: float = 1e-5
    seed: int = 0
    target_auc: float | None = None
    auc_behavior: str = "click"


@dataclass
class PretrainResult:
    epoch_losses: list[float] = field(default_factory=list)
    epoch_aucs: list[float | None] = field(default_factory=list)
    aborted: bool = False

    def trace_jsonl(self) -> str:
        import json
        lines = []
        for i, loss in enumerate(self.epoch_losses):
            rec = {"epoch": i, "loss": loss, "auc": self.epoch_aucs[i]}
            lines.append(json.dumps(rec, sort_keys=True))
        return "\n".join(lines) + "\n"


def pretrain(model: UirmModel, train: LogDataset, hyper: PretrainConfig,
             val: LogDataset | None = None) -> PretrainResult:
    """Point-wise BCE pretraining on log data (diversity penalty off).

    Runs mini-batch Adam; a non-finite epoch loss aborts and restores the
    last finished epoch's parameters. With `target_auc` set and a validation
    split given, training stops early once the held-out AUC for
    `auc_behavior` reaches the target.
    """
    if train.n_records == 0:
        raise ValueError("empty training log")
    opt = AdamState(model.store, lr=hyper.lr, l2=hyper.l2)
    rng = np.random.default_rng(hyper.seed)
    result = PretrainResult()
    snapshot = model.store.as_dict()
    n = train.n_records
    cap = model.config.hist_cap

    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        total, batches = 0.0, 0
        params = {k: model.store[k] for k in model.store.names()}
        for lo in range(0, n, hyper.batch_size):
            pos = order[lo:lo + hyper.batch_size]
            batch = make_example_batch(train, pos, cap)
            try:
                loss, grads = model.loss_and_grads(params, batch, train=True, rng=rng)
            except (FloatingPointError, ValueError):
                # exploded parameters poison the forward pass; same as a
                # non-finite loss
                loss = float("nan")
            if not np.isfinite(loss):
                model.store.load_dict(snapshot)
                result.aborted = True
                return result
            opt.step(model.store, grads)
            params = {k: model.store[k] for k in model.store.names()}
            total += loss
            batches += 1
        result.epoch_losses.append(total / max(1, batches))
        snapshot = model.store.as_dict()

        epoch_auc = None
        if val is not None and val.n_records > 0:
            epoch_auc = evaluate_auc(model, val, history=train).get(hyper.auc_behavior)
        result.epoch_aucs.append(epoch_auc)
        if (hyper.target_auc is not None and epoch_auc is not None
                and epoch_auc >= hyper.target_auc):
            break
    return result


def score_records(model: UirmModel, timeline: LogDataset, positions: np.ndarray,
                  batch_size: int = 512) -> np.ndarray:
    """Predicted behavior probabilities [len(positions), b] for logged exposures."""
    params = {k: model.store[k] for k in model.store.names()}
    out = np.empty((len(positions), model.schema.b), dtype=np.float64)
    cap = model.config.hist_cap
    for lo in range(0, len(positions), batch_size):
        pos = positions[lo:lo + batch_size]
        hist_ids, hist_fb, mask, profile, targets, _ = make_example_batch(timeline, pos, cap)
        state, _ = model._state_forward(params, hist_ids, hist_fb, mask, profile)
        w, _ = model.beh_head.forward(params, state)
        us = affine_map(params["state_proj.w"], params["state_proj.b"], state)
        e_t = embedding_lookup(params["item_emb"], targets)
        c = (us * e_t).sum(axis=1)
        out[lo:lo + len(pos)] = sigmoid(w * c[:, None])
    return out


def evaluate_auc(model: UirmModel, test: LogDataset,
                 history: LogDataset | None = None) -> dict[str, float | None]:
    """Per-behavior rank AUC of model scores on a held-out log.

    Each test record is scored from the user's prior history; `history`
    supplies the earlier (training) portion of the timeline. Behaviors with a
    single label class report None.
    """
    if history is not None:
        timeline = merge_user_logs(history, test)
        positions = []
        for u in range(timeline.users.n_users):
            n_hist = int(history.user_offsets[u + 1] - history.user_offsets[u])
            lo = int(timeline.user_offsets[u]) + n_hist
            hi = int(timeline.user_offsets[u + 1])
            positions.extend(range(lo, hi))
        positions = np.asarray(positions, dtype=np.int64)
    else:
        timeline = test
        positions = np.arange(test.n_records, dtype=np.int64)

    scores = score_records(model, timeline, positions)
    labels = timeline.behaviors[positions]
    result: dict[str, float | None] = {}
    for i, name in enumerate(model.schema.names):
        result[name] = rank_auc(scores[:, i], labels[:, i])
    return result
