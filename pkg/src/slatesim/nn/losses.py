"""Losses with analytic gradients."""

from __future__ import annotations

import numpy as np

BCE_EPS = 1e-7


def bce_loss(pred: np.ndarray, label: np.ndarray):
    """Mean binary cross-entropy over all cells; returns (loss, dloss/dpred).

    Predictions are clamped to [BCE_EPS, 1 - BCE_EPS] before the log.
    """
    pred = np.asarray(pred)
    label = np.asarray(label)
    if pred.size == 0:
        raise ValueError("empty batch")
    p = np.clip(pred, BCE_EPS, 1.0 - BCE_EPS)
    y = label.astype(p.dtype)
    loss = float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log1p(-p))))
    grad = (p - y) / (p * (1.0 - p)) / p.size
    return loss, grad


def bce_with_logits(logits: np.ndarray, label: np.ndarray):
    """Numerically stable mean BCE on logits; returns (loss, dloss/dlogits)."""
    z = np.asarray(logits)
    if z.size == 0:
        raise ValueError("empty batch")
    y = np.asarray(label, dtype=z.dtype)
    loss = float(np.mean(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))))
    sig = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.clip(z, 0, None))),
                   np.exp(np.clip(z, None, 0)) / (1.0 + np.exp(np.clip(z, None, 0))))
    grad = (sig - y) / z.size
    return loss, grad


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error; returns (loss, dloss/dpred)."""
    pred = np.asarray(pred)
    if pred.size == 0:
        raise ValueError("empty batch")
    diff = pred - np.asarray(target, dtype=pred.dtype)
    loss = float(np.mean(diff * diff))
    grad = 2.0 * diff / pred.size
    return loss, grad
