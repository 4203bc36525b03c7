"""Small fully-connected heads with explicit backward passes."""

from __future__ import annotations

import numpy as np

from .layers import (
    affine_map, affine_bwd, dropout, dropout_bwd, sigmoid, sigmoid_bwd, tanh_bwd,
)
from .params import ParamStore


class Mlp:
    """Feed-forward head over the last axis; hidden layers use tanh.

    `out_act` may be None (linear), 'sigmoid', or 'tanh'. Dropout, when
    enabled, follows each hidden activation in training mode.
    """

    def __init__(self, store: ParamStore, prefix: str, dims: tuple[int, ...],
                 out_act: str | None = None, dropout_rate: float = 0.0):
        if len(dims) < 2:
            raise ValueError("need at least input and output dims")
        if out_act not in (None, "sigmoid", "tanh"):
            raise ValueError(f"unknown output activation {out_act!r}")
        self.prefix = prefix
        self.dims = tuple(dims)
        self.out_act = out_act
        self.dropout_rate = dropout_rate
        for i in range(len(dims) - 1):
            store.add_linear(f"{prefix}.l{i}", dims[i], dims[i + 1])

    @property
    def n_layers(self) -> int:
        return len(self.dims) - 1

    def forward(self, params, x: np.ndarray, *, train: bool = False,
                rng: np.random.Generator | None = None):
        caches = []
        h = x
        for i in range(self.n_layers):
            z = affine_map(params[f"{self.prefix}.l{i}.w"], params[f"{self.prefix}.l{i}.b"], h)
            if i < self.n_layers - 1:
                a = np.tanh(z)
                out, drop = dropout(a, self.dropout_rate, rng, train)
                caches.append((h, a, drop))
                h = out
            else:
                caches.append((h, None, None))
                if self.out_act == "sigmoid":
                    h = sigmoid(z)
                elif self.out_act == "tanh":
                    h = np.tanh(z)
                else:
                    h = z
        return h, (caches, h)

    def backward(self, params, cache, dy: np.ndarray):
        caches, y = cache
        grads: dict[str, np.ndarray] = {}
        if self.out_act == "sigmoid":
            d = sigmoid_bwd(dy, y)
        elif self.out_act == "tanh":
            d = tanh_bwd(dy, y)
        else:
            d = dy
        for i in reversed(range(self.n_layers)):
            h_in, a, drop = caches[i]
            if i < self.n_layers - 1:
                d = dropout_bwd(d, drop)
                d = tanh_bwd(d, a)
            dx, dw, db = affine_bwd(d, h_in, params[f"{self.prefix}.l{i}.w"])
            grads[f"{self.prefix}.l{i}.w"] = dw
            grads[f"{self.prefix}.l{i}.b"] = db
            d = dx
        return grads, d
