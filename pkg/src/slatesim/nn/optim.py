"""Adam-style optimizer with decoupled L2."""

from __future__ import annotations

import numpy as np

from .params import ParamStore


class AdamState:
    """Per-parameter moment accumulators plus step bookkeeping.

    The update is Adam with bias correction and a decoupled weight-decay
    term: theta -= lr * (m_hat / (sqrt(v_hat) + eps) + l2 * theta).
    Non-finite gradients skip the step (counted, parameters untouched).
    """

    def __init__(self, store: ParamStore, lr: float, l2: float = 0.0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = float(lr)
        self.l2 = float(l2)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.skipped = 0
        self.m = {k: np.zeros(v, dtype=np.float32) for k, v in store.shapes().items()}
        self.v = {k: np.zeros(v, dtype=np.float32) for k, v in store.shapes().items()}

    def step(self, store: ParamStore, grads: dict[str, np.ndarray]) -> bool:
        """Apply one update; returns False (and skips) on non-finite gradients."""
        for name, g in grads.items():
            if self.m[name].shape != g.shape:
                raise ValueError(f"gradient shape mismatch for {name!r}")
            if not np.all(np.isfinite(g)):
                self.skipped += 1
                return False
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            g32 = g.astype(np.float32, copy=False)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g32
            v *= self.beta2
            v += (1.0 - self.beta2) * (g32 * g32)
            theta = store[name]
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            if self.l2 != 0.0:
                update = update + self.l2 * theta
            store[name] = theta - self.lr * update
        return True


def optimizer_step(opt: AdamState, store: ParamStore, grads: dict[str, np.ndarray]) -> bool:
    return opt.step(store, grads)
