"""Multi-head self-attention sequence encoder with masked mean pooling."""

from __future__ import annotations

import numpy as np

from .layers import (
    affine_map, affine_bwd, dropout, dropout_bwd, layernorm, layernorm_bwd,
    masked_mean, masked_mean_bwd, masked_softmax, masked_softmax_bwd, tanh_bwd,
)
from .params import ParamStore, accumulate_grads


class AttentionEncoder:
    """Stack of self-attention blocks pooling a masked sequence to one vector.

    Each block is post-norm: multi-head attention with a residual connection
    and layer norm, then a position-wise tanh feed-forward (hidden width
    `ffn_mult` times the model width) with residual and layer norm. Learned
    positional embeddings are added to the input tokens. Dropout is applied
    to the attention-block output and to the feed-forward hidden layer.
    """

    def __init__(self, store: ParamStore, prefix: str, dim: int, max_len: int,
                 heads: int = 2, blocks: int = 2, ffn_mult: int = 2,
                 dropout_rate: float = 0.2):
        if dim % heads != 0:
            raise ValueError("dim must be divisible by heads")
        self.prefix = prefix
        self.dim = dim
        self.max_len = max_len
        self.heads = heads
        self.blocks = blocks
        self.head_dim = dim // heads
        self.ffn_dim = ffn_mult * dim
        self.dropout_rate = dropout_rate

        store.add(f"{prefix}.pos", (max_len, dim), init="embed")
        for i in range(blocks):
            base = f"{prefix}.block{i}"
            for proj in ("wq", "wk", "wv", "wo"):
                store.add_linear(f"{base}.{proj}", dim, dim)
            store.add(f"{base}.ln1.g", (dim,), init="ones")
            store.add(f"{base}.ln1.b", (dim,), init="zeros")
            store.add_linear(f"{base}.ffn1", dim, self.ffn_dim)
            store.add_linear(f"{base}.ffn2", self.ffn_dim, dim)
            store.add(f"{base}.ln2.g", (dim,), init="ones")
            store.add(f"{base}.ln2.b", (dim,), init="zeros")

    def _split(self, x: np.ndarray) -> np.ndarray:
        n, length, _ = x.shape
        return x.reshape(n, length, self.heads, self.head_dim).transpose(0, 2, 1, 3)

    def _merge(self, x: np.ndarray) -> np.ndarray:
        n, _, length, _ = x.shape
        return x.transpose(0, 2, 1, 3).reshape(n, length, self.dim)

    def forward(self, params, seq: np.ndarray, mask: np.ndarray, *, train: bool = False,
                rng: np.random.Generator | None = None, return_attention: bool = False):
        """Encode seq [n, L, dim] with mask [n, L]; returns (pooled [n, dim], cache)."""
        n, length, dim = seq.shape
        if dim != self.dim:
            raise ValueError("sequence width does not match encoder dim")
        if length > self.max_len:
            raise ValueError("sequence longer than the positional table")
        mask = np.asarray(mask, dtype=bool)
        if not np.all(mask.any(axis=-1)):
            raise ValueError("all-masked sequence")
        scale = 1.0 / np.sqrt(self.head_dim)
        key_mask = mask[:, None, None, :]

        x = seq + params[f"{self.prefix}.pos"][:length]
        block_caches = []
        attentions = []
        for i in range(self.blocks):
            base = f"{self.prefix}.block{i}"
            q = affine_map(params[f"{base}.wq.w"], params[f"{base}.wq.b"], x)
            k = affine_map(params[f"{base}.wk.w"], params[f"{base}.wk.b"], x)
            v = affine_map(params[f"{base}.wv.w"], params[f"{base}.wv.b"], x)
            qh, kh, vh = self._split(q), self._split(k), self._split(v)
            logits = (qh @ kh.transpose(0, 1, 3, 2)) * scale
            att = masked_softmax(logits, key_mask)
            if return_attention:
                attentions.append(att)
            ctx = att @ vh
            ctx_m = self._merge(ctx)
            o = affine_map(params[f"{base}.wo.w"], params[f"{base}.wo.b"], ctx_m)
            o, drop1 = dropout(o, self.dropout_rate, rng, train)
            res1 = x + o
            x1, ln1 = layernorm(res1, params[f"{base}.ln1.g"], params[f"{base}.ln1.b"])
            hpre = affine_map(params[f"{base}.ffn1.w"], params[f"{base}.ffn1.b"], x1)
            act = np.tanh(hpre)
            h, drop2 = dropout(act, self.dropout_rate, rng, train)
            f = affine_map(params[f"{base}.ffn2.w"], params[f"{base}.ffn2.b"], h)
            res2 = x1 + f
            x2, ln2 = layernorm(res2, params[f"{base}.ln2.g"], params[f"{base}.ln2.b"])
            block_caches.append((x, qh, kh, vh, att, ctx_m, drop1, ln1, x1, act, h, drop2, ln2))
            x = x2

        pooled, pool_cache = masked_mean(x, mask)
        cache = (length, mask, block_caches, pool_cache, attentions)
        return pooled, cache

    def backward(self, params, cache, dpooled: np.ndarray):
        """Backward pass; returns (grads by name, dseq)."""
        length, mask, block_caches, pool_cache, _ = cache
        scale = 1.0 / np.sqrt(self.head_dim)
        grads: dict[str, np.ndarray] = {}
        dx = masked_mean_bwd(dpooled, pool_cache)

        for i in reversed(range(self.blocks)):
            base = f"{self.prefix}.block{i}"
            (x, qh, kh, vh, att, ctx_m, drop1, ln1, x1, act, h, drop2, ln2) = block_caches[i]

            dres2, dg2, db2 = layernorm_bwd(dx, ln2, params[f"{base}.ln2.g"])
            grads[f"{base}.ln2.g"] = dg2
            grads[f"{base}.ln2.b"] = db2
            dx1 = dres2
            df = dres2
            dh, dw2, db2f = affine_bwd(df, h, params[f"{base}.ffn2.w"])
            grads[f"{base}.ffn2.w"] = dw2
            grads[f"{base}.ffn2.b"] = db2f
            dh = dropout_bwd(dh, drop2)
            dhpre = tanh_bwd(dh, act)
            dx1b, dw1, db1f = affine_bwd(dhpre, x1, params[f"{base}.ffn1.w"])
            grads[f"{base}.ffn1.w"] = dw1
            grads[f"{base}.ffn1.b"] = db1f
            dx1 = dx1 + dx1b

            dres1, dg1, db1 = layernorm_bwd(dx1, ln1, params[f"{base}.ln1.g"])
            grads[f"{base}.ln1.g"] = dg1
            grads[f"{base}.ln1.b"] = db1
            dx_res = dres1
            do = dropout_bwd(dres1, drop1)
            dctx_m, dwo, dbo = affine_bwd(do, ctx_m, params[f"{base}.wo.w"])
            grads[f"{base}.wo.w"] = dwo
            grads[f"{base}.wo.b"] = dbo
            dctx = self._split(dctx_m)
            datt = dctx @ vh.transpose(0, 1, 3, 2)
            dvh = att.transpose(0, 1, 3, 2) @ dctx
            dlogits = masked_softmax_bwd(datt, att)
            dqh = (dlogits @ kh) * scale
            dkh = (dlogits.transpose(0, 1, 3, 2) @ qh) * scale
            dq, dk, dv = self._merge(dqh), self._merge(dkh), self._merge(dvh)
            dxa, dwq, dbq = affine_bwd(dq, x, params[f"{base}.wq.w"])
            dxb, dwk, dbk = affine_bwd(dk, x, params[f"{base}.wk.w"])
            dxc, dwv, dbv = affine_bwd(dv, x, params[f"{base}.wv.w"])
            grads[f"{base}.wq.w"], grads[f"{base}.wq.b"] = dwq, dbq
            grads[f"{base}.wk.w"], grads[f"{base}.wk.b"] = dwk, dbk
            grads[f"{base}.wv.w"], grads[f"{base}.wv.b"] = dwv, dbv
            dx = dxa + dxb + dxc + dx_res

        dpos = np.zeros_like(params[f"{self.prefix}.pos"])
        dpos[:length] = dx.sum(axis=0)
        grads[f"{self.prefix}.pos"] = dpos
        return grads, dx


def attention_encode(encoder: AttentionEncoder, params, sequence: np.ndarray,
                     mask: np.ndarray, return_attention: bool = False):
    """Encode a single sequence [L, dim] with mask [L] into a pooled vector [dim]."""
    pooled, cache = encoder.forward(params, sequence[None], np.asarray(mask, dtype=bool)[None],
                                    return_attention=return_attention)
    if return_attention:
        return pooled[0], cache[4]
    return pooled[0]
