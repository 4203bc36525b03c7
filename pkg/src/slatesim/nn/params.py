"""Named parameter tensors with seed-deterministic initialization."""

from __future__ import annotations

import numpy as np


class ParamStore:
    """Flat registry of named trainable tensors.

    Shapes are fixed at registration. Training tensors live in float32; use
    `as_dict(np.float64)` for a shadow copy when checking gradients.
    """

    def __init__(self, seed: int, dtype=np.float32):
        self.seed = int(seed)
        self.dtype = dtype
        self._rng = np.random.default_rng(seed)
        self._arrays: dict[str, np.ndarray] = {}

    def _register(self, name: str, array: np.ndarray) -> np.ndarray:
        if name in self._arrays:
            raise KeyError(f"parameter {name!r} already registered")
        if not np.all(np.isfinite(array)):
            raise ValueError(f"parameter {name!r} has non-finite entries")
        arr = np.ascontiguousarray(array, dtype=self.dtype)
        self._arrays[name] = arr
        return arr

    def add(self, name: str, shape: tuple[int, ...], init: str = "zeros") -> np.ndarray:
        """Register a tensor. init: 'zeros', 'glorot' (2-D), 'embed', or 'ones'."""
        if init == "zeros":
            arr = np.zeros(shape)
        elif init == "ones":
            arr = np.ones(shape)
        elif init == "glorot":
            if len(shape) != 2:
                raise ValueError("glorot init expects a 2-D shape")
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            arr = self._rng.uniform(-limit, limit, size=shape)
        elif init == "embed":
            arr = self._rng.normal(0.0, 1.0 / np.sqrt(shape[-1]), size=shape)
        else:
            raise ValueError(f"unknown init {init!r}")
        return self._register(name, arr)

    def add_linear(self, name: str, d_in: int, d_out: int) -> None:
        """Register a weight matrix `name.w` [d_in, d_out] and bias `name.b` [d_out]."""
        self.add(f"{name}.w", (d_in, d_out), init="glorot")
        self.add(f"{name}.b", (d_out,), init="zeros")

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        if name not in self._arrays:
            raise KeyError(f"parameter {name!r} not registered")
        if value.shape != self._arrays[name].shape:
            raise ValueError(f"shape mismatch for {name!r}")
        self._arrays[name] = np.ascontiguousarray(value, dtype=self.dtype)

    def __contains__(self, name: str) -> bool:
        return name in self._arrays

    def names(self) -> list[str]:
        return list(self._arrays)

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: v.shape for k, v in self._arrays.items()}

    def as_dict(self, dtype=None) -> dict[str, np.ndarray]:
        """Copy of all tensors, optionally cast (e.g. float64 shadow for checks)."""
        dt = self.dtype if dtype is None else dtype
        return {k: v.astype(dt) for k, v in self._arrays.items()}

    def load_dict(self, arrays: dict[str, np.ndarray]) -> None:
        for name, value in arrays.items():
            self[name] = value

    def n_parameters(self) -> int:
        return sum(v.size for v in self._arrays.values())

    def check_finite(self) -> None:
        for name, arr in self._arrays.items():
            if not np.all(np.isfinite(arr)):
                raise FloatingPointError(f"parameter {name!r} has non-finite entries")


def accumulate_grads(total: dict[str, np.ndarray], part: dict[str, np.ndarray]) -> None:
    """Sum gradient contributions in place."""
    for name, g in part.items():
        if name in total:
            total[name] = total[name] + g
        else:
            total[name] = g
