"""Central-difference oracle for analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

FD_STEP = 1e-5
REL_FLOOR = 1e-4
MIN_COORDS = 200


class NondeterministicModelError(RuntimeError):
    """Raised when two forward passes on identical inputs disagree."""


def gradient_check(loss_and_grads: Callable[[dict[str, np.ndarray]], tuple[float, dict[str, np.ndarray]]],
                   params: dict[str, np.ndarray],
                   rng: np.random.Generator,
                   n_coords: int = MIN_COORDS,
                   step: float = FD_STEP) -> float:
    """Max relative error between analytic gradients and central differences.

    `loss_and_grads(params)` must return (scalar loss, grads-by-name) and be
    deterministic; the check runs on float64 copies of `params` and probes a
    random subsample of coordinates (all of them when the model is small).
    The per-coordinate error is |a - n| / max(|a|, |n|, floor).
    """
    p64 = {k: np.asarray(v, dtype=np.float64).copy() for k, v in params.items()}
    loss_a, grads = loss_and_grads(p64)
    loss_b, _ = loss_and_grads(p64)
    if loss_a != loss_b:
        raise NondeterministicModelError(
            f"two forward passes disagree: {loss_a!r} vs {loss_b!r}")

    coords: list[tuple[str, int]] = []
    for name in sorted(p64):
        coords.extend((name, i) for i in range(p64[name].size))
    total = len(coords)
    take = min(total, max(n_coords, MIN_COORDS))
    chosen = [coords[i] for i in rng.choice(total, size=take, replace=False)] \
        if take < total else coords

    max_rel = 0.0
    for name, flat in chosen:
        arr = p64[name]
        idx = np.unravel_index(flat, arr.shape)
        orig = arr[idx]
        arr[idx] = orig + step
        f_plus, _ = loss_and_grads(p64)
        arr[idx] = orig - step
        f_minus, _ = loss_and_grads(p64)
        arr[idx] = orig
        numeric = (f_plus - f_minus) / (2.0 * step)
        analytic = float(grads[name][idx])
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), REL_FLOOR)
        max_rel = max(max_rel, rel)
    return max_rel
