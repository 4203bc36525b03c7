"""Cross-entropy method over flat parameter vectors, plus a linear slate policy."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..core import ItemCatalog, Observation, SlateAction
from .base import Agent, ObservationFeaturizer, hyperaction_to_slate

VAR_FLOOR = 1e-4


@dataclass(frozen=True)
class CemConfig:
    population: int = 24
    elite_frac: float = 0.25
    iterations: int = 10
    init_std: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.population < 10:
            raise ValueError("population must be >= 10")
        if not 0.0 < self.elite_frac <= 1.0:
            raise ValueError("elite_frac must lie in (0, 1]")


@dataclass
class CemResult:
    best_params: np.ndarray
    best_value: float
    trace: list[dict] = field(default_factory=list)


def cem_iterate(objective: Callable[[np.ndarray], float], init_mean: np.ndarray,
                config: CemConfig = CemConfig()) -> CemResult:
    """Maximize a black-box objective by iterated elite refitting.

    A diagonal Gaussian search distribution is refit to the top
    `elite_frac` fraction each iteration, with per-coordinate variance
    floored at 1e-4. Returns the best parameters ever evaluated; when a
    population evaluates all-equal the distribution is left frozen for that
    iteration and a warning is emitted.
    """
    rng = np.random.default_rng(config.seed)
    mean = np.asarray(init_mean, dtype=np.float64).copy()
    std = np.full_like(mean, config.init_std)
    n_elite = max(1, round(config.elite_frac * config.population))
    best_params = mean.copy()
    best_value = -np.inf
    result = CemResult(best_params=best_params, best_value=best_value)

    for it in range(config.iterations):
        thetas = mean[None, :] + std[None, :] * rng.normal(
            size=(config.population, mean.shape[0]))
        values = np.array([float(objective(t)) for t in thetas])
        order = np.argsort(-values, kind="stable")
        top = values[order[0]]
        if top > best_value:
            best_value = float(top)
            best_params = thetas[order[0]].copy()
        if np.all(values == values[0]):
            warnings.warn("all candidates scored equally; search distribution frozen")
        else:
            elites = thetas[order[:n_elite]]
            mean = elites.mean(axis=0)
            std = np.sqrt(np.maximum(elites.var(axis=0), VAR_FLOOR))
        result.trace.append({
            "iteration": it,
            "population_mean": float(values.mean()),
            "elite_mean": float(values[order[:n_elite]].mean()),
            "best_value": best_value,
        })

    result.best_params = best_params
    result.best_value = float(best_value)
    return result


class LinearPolicy:
    """Hyper-action as an affine map of the featurized observation."""

    def __init__(self, featurizer: ObservationFeaturizer, action_dim: int):
        self.featurizer = featurizer
        self.state_dim = featurizer.dim
        self.action_dim = action_dim

    @property
    def n_params(self) -> int:
        return self.action_dim * (self.state_dim + 1)

    def split(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        w = theta[: self.action_dim * self.state_dim].reshape(self.action_dim,
                                                              self.state_dim)
        b = theta[self.action_dim * self.state_dim:]
        return w, b

    def vector(self, theta: np.ndarray, obs: Observation) -> np.ndarray:
        w, b = self.split(theta)
        return w @ self.featurizer(obs) + b


class CemAgent(Agent):
    """Fixed linear policy (e.g. the best CEM candidate) decoding to slates."""

    def __init__(self, policy: LinearPolicy, theta: np.ndarray,
                 catalog: ItemCatalog, k: int, embeddings: np.ndarray | None = None):
        self.policy = policy
        self.theta = np.asarray(theta, dtype=np.float64)
        self.catalog = catalog
        self.k = k
        self.embeddings = policy.featurizer.embeddings if embeddings is None else embeddings

    def act(self, obs: Observation, explore: bool = False) -> SlateAction:
        v = self.policy.vector(self.theta, obs)
        return hyperaction_to_slate(v, self.catalog, self.k, embeddings=self.embeddings)
