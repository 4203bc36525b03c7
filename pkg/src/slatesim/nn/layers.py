"""Forward/backward pairs for the fixed layer set used by the simulator models."""

from __future__ import annotations

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)
LN_EPS = 1e-5


def affine_map(w: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    """y = x @ w + b, applied to the last axis of x."""
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"affine shape mismatch: x[..., {x.shape[-1]}] @ w[{w.shape[0]}, ...]")
    return x @ w + b


def affine_bwd(dy: np.ndarray, x: np.ndarray, w: np.ndarray):
    """Gradients of affine_map; x may have leading batch axes."""
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    dw = x2.T @ dy2
    db = dy2.sum(axis=0)
    dx = dy @ w.T
    return dx, dw, db


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact Gaussian-error-linear unit, x * Phi(x)."""
    return x * 0.5 * (1.0 + erf(x * _INV_SQRT2))


def gelu_bwd(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    phi = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    return dy * (cdf + x * phi)


def tanh_bwd(dy: np.ndarray, y: np.ndarray) -> np.ndarray:
    return dy * (1.0 - y * y)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_bwd(dy: np.ndarray, y: np.ndarray) -> np.ndarray:
    return dy * y * (1.0 - y)


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Softmax over the last axis with False positions forced to zero weight.

    Every row must keep at least one True position.
    """
    neg = np.array(-1e30, dtype=logits.dtype)
    shifted = np.where(mask, logits, neg)
    shifted = shifted - shifted.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    e = np.where(mask, e, 0.0)
    denom = e.sum(axis=-1, keepdims=True)
    if np.any(denom == 0.0):
        raise ValueError("softmax row with no unmasked position")
    return e / denom


def masked_softmax_bwd(dp: np.ndarray, p: np.ndarray) -> np.ndarray:
    inner = (dp * p).sum(axis=-1, keepdims=True)
    return p * (dp - inner)


def layernorm(x: np.ndarray, g: np.ndarray, b: np.ndarray):
    """Normalize the last axis; returns (y, cache) for the backward pass."""
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    y = g * xhat + b
    return y, (xhat, inv)


def layernorm_bwd(dy: np.ndarray, cache, g: np.ndarray):
    xhat, inv = cache
    dg = (dy * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0)
    db = dy.reshape(-1, dy.shape[-1]).sum(axis=0)
    dxhat = dy * g
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - m1 - xhat * m2)
    return dx, dg, db


def dropout(x: np.ndarray, rate: float, rng: np.random.Generator | None, train: bool):
    """Inverted dropout: zero a `rate` fraction, rescale survivors by 1/(1-rate)."""
    if not train or rate <= 0.0:
        return x, None
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    keep = rng.random(x.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    return x * keep * scale, (keep, scale)


def dropout_bwd(dy: np.ndarray, cache) -> np.ndarray:
    if cache is None:
        return dy
    keep, scale = cache
    return dy * keep * scale


def masked_mean(x: np.ndarray, mask: np.ndarray):
    """Mean over axis -2 restricted to True positions; mask is [..., L]."""
    m = mask[..., None].astype(x.dtype)
    count = m.sum(axis=-2)
    if np.any(count == 0.0):
        raise ValueError("masked_mean over an all-masked sequence")
    pooled = (x * m).sum(axis=-2) / count
    return pooled, (m, count)


def masked_mean_bwd(dpooled: np.ndarray, cache) -> np.ndarray:
    m, count = cache
    return dpooled[..., None, :] * m / count[..., None, :]


def embedding_lookup(table: np.ndarray, ids: np.ndarray) -> np.ndarray:
    if np.any(ids < 0) or np.any(ids >= table.shape[0]):
        raise IndexError("embedding id out of range")
    return table[ids]


def embedding_bwd(dvecs: np.ndarray, ids: np.ndarray, table_shape: tuple[int, ...]) -> np.ndarray:
    dtable = np.zeros(table_shape, dtype=dvecs.dtype)
    np.add.at(dtable, ids.reshape(-1), dvecs.reshape(-1, table_shape[-1]))
    return dtable
