"""Actor-critic baselines over hyper-actions: DDPG, TD3, and A2C."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import ItemCatalog, Observation, SlateAction
from ..nn import AdamState, Mlp, ParamStore, mse_loss
from .base import Agent, ObservationFeaturizer, Transition, top_k_by_score
from .buffer import ReplayBuffer


@dataclass(frozen=True)
class AcConfig:
    gamma: float = 0.9
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    tau: float = 0.005
    policy_delay: int = 2
    noise: float = 0.1
    noise_final: float = 0.02
    noise_anneal: int = 5000
    target_noise: float = 0.2
    target_clip: float = 0.5
    batch_size: int = 128
    buffer_capacity: int = 100_000
    min_fill: int = 1000
    entropy_coef: float = 0.01
    rollout: int = 32
    init_std: float = 0.3
    seed: int = 0


def clone_store(src: ParamStore) -> ParamStore:
    out = ParamStore(seed=src.seed)
    for name in src.names():
        out.add(name, src[name].shape, init="zeros")
        out[name] = src[name]
    return out


def soft_update(target: ParamStore, online: ParamStore, tau: float) -> None:
    """target <- tau * online + (1 - tau) * target, per tensor."""
    t = np.float32(tau)
    for name in online.names():
        target[name] = t * online[name] + (np.float32(1.0) - t) * target[name]


class _HyperActionAgent(Agent):
    """Shared plumbing: featurize, run the actor, decode a slate."""

    def __init__(self, featurizer: ObservationFeaturizer, catalog: ItemCatalog,
                 k: int, config: AcConfig, embeddings: np.ndarray | None = None):
        self.featurizer = featurizer
        self.catalog = catalog
        self.embeddings = featurizer.embeddings if embeddings is None else embeddings
        self.k = k
        self.config = config
        self.state_dim = featurizer.dim
        self.action_dim = self.embeddings.shape[1]
        self.rng = np.random.default_rng(config.seed)
        self.updates = 0

        self.actor_store = ParamStore(seed=config.seed)
        hidden = 2 * self.state_dim
        self.actor = Mlp(self.actor_store, "actor",
                         (self.state_dim, hidden, self.action_dim), out_act="tanh")

    def _actor_forward(self, store: ParamStore, states: np.ndarray):
        params = {k: store[k] for k in store.names()}
        return self.actor.forward(params, states)

    def exploration_noise(self) -> float:
        c = self.config
        frac = min(1.0, self.updates / max(1, c.noise_anneal))
        return c.noise + (c.noise_final - c.noise) * frac

    def _decode_batch(self, vectors: np.ndarray) -> list[SlateAction]:
        scores = vectors @ self.embeddings.T.astype(np.float64)
        return [SlateAction(top_k_by_score(row, self.k)) for row in scores]

    def _policy_vectors(self, states: np.ndarray, explore: bool) -> np.ndarray:
        a, _ = self._actor_forward(self.actor_store, states)
        a = a.astype(np.float64)
        if explore:
            a = a + self.rng.normal(0.0, self.exploration_noise(), size=a.shape)
        return a

    def act_batch(self, observations, explore: bool = False, states=None):
        if states is None:
            states = np.stack([self.featurizer(o) for o in observations])
        else:
            states = np.asarray(states)
        vectors = self._policy_vectors(states, explore)
        slates = self._decode_batch(vectors)
        return slates, [v.astype(np.float32) for v in vectors]

    def act_with_vector(self, obs: Observation, explore: bool = False):
        slates, vectors = self.act_batch([obs], explore)
        return slates[0], vectors[0]

    def act(self, obs: Observation, explore: bool = False) -> SlateAction:
        return self.act_with_vector(obs, explore)[0]


class _CriticMixin:
    """Q-network helpers over concat(state, action) inputs."""

    def _critic_values(self, store: ParamStore, mlp: Mlp, states, actions):
        params = {k: store[k] for k in store.names()}
        x = np.concatenate([states, actions], axis=1)
        q, cache = mlp.forward(params, x)
        return q[:, 0], cache, params

    def _critic_action_grad(self, store: ParamStore, mlp: Mlp, states, actions):
        """dQ/da averaged objective: returns (mean Q, dQmean/dactions)."""
        q, cache, params = self._critic_values(store, mlp, states, actions)
        dq = np.full((q.shape[0], 1), 1.0 / q.shape[0], dtype=np.float64)
        _, dx = mlp.backward(params, cache, dq)
        return float(q.mean()), dx[:, states.shape[1]:]


class DdpgAgent(_HyperActionAgent, _CriticMixin):
    """Deterministic policy gradient with target networks and a replay buffer."""

    def __init__(self, featurizer, catalog, k, config: AcConfig = AcConfig(),
                 embeddings=None):
        super().__init__(featurizer, catalog, k, config, embeddings)
        hidden = 2 * (self.state_dim + self.action_dim)
        self.critic_store = ParamStore(seed=config.seed + 1)
        self.critic = Mlp(self.critic_store, "critic",
                          (self.state_dim + self.action_dim, hidden, 1))
        self.actor_target = clone_store(self.actor_store)
        self.critic_target = clone_store(self.critic_store)
        self.actor_opt = AdamState(self.actor_store, lr=config.actor_lr)
        self.critic_opt = AdamState(self.critic_store, lr=config.critic_lr)
        self.buffer = ReplayBuffer(config.buffer_capacity, self.state_dim, self.action_dim)

    def observe(self, tr: Transition) -> None:
        self.buffer.add(tr)

    def _targets(self, batch) -> np.ndarray:
        a2, _ = self._actor_forward(self.actor_target, batch["next_state"])
        q2, _, _ = self._critic_values(self.critic_target, self.critic,
                                       batch["next_state"], a2)
        return batch["reward"] + self.config.gamma * (1.0 - batch["done"]) * q2

    def update(self) -> dict[str, float]:
        c = self.config
        if len(self.buffer) < max(c.min_fill, c.batch_size):
            return {}
        batch = self.buffer.sample(c.batch_size, self.rng)
        y = self._targets(batch)

        q, cache, params = self._critic_values(self.critic_store, self.critic,
                                               batch["state"], batch["action"])
        critic_loss, dq = mse_loss(q, y)
        grads, _ = self.critic.backward(params, cache, dq[:, None])
        if not np.isfinite(critic_loss):
            raise FloatingPointError("non-finite critic loss")
        self.critic_opt.step(self.critic_store, grads)

        a_pi, actor_cache = self._actor_forward(self.actor_store, batch["state"])
        q_mean, dq_da = self._critic_action_grad(self.critic_store, self.critic,
                                                 batch["state"], a_pi)
        actor_loss = -q_mean
        if not np.isfinite(actor_loss):
            raise FloatingPointError("non-finite actor loss")
        actor_params = {k: self.actor_store[k] for k in self.actor_store.names()}
        actor_grads, _ = self.actor.backward(actor_params, actor_cache, -dq_da)
        self.actor_opt.step(self.actor_store, actor_grads)

        soft_update(self.actor_target, self.actor_store, c.tau)
        soft_update(self.critic_target, self.critic_store, c.tau)
        self.updates += 1
        return {"critic_loss": critic_loss, "actor_loss": actor_loss}


class Td3Agent(_HyperActionAgent, _CriticMixin):
    """Twin critics, clipped-noise target actions, delayed policy updates."""

    def __init__(self, featurizer, catalog, k, config: AcConfig = AcConfig(),
                 embeddings=None):
        super().__init__(featurizer, catalog, k, config, embeddings)
        hidden = 2 * (self.state_dim + self.action_dim)
        self.critic_store = ParamStore(seed=config.seed + 1)
        self.q1 = Mlp(self.critic_store, "q1", (self.state_dim + self.action_dim, hidden, 1))
        self.q2 = Mlp(self.critic_store, "q2", (self.state_dim + self.action_dim, hidden, 1))
        self.actor_target = clone_store(self.actor_store)
        self.critic_target = clone_store(self.critic_store)
        self.actor_opt = AdamState(self.actor_store, lr=config.actor_lr)
        self.critic_opt = AdamState(self.critic_store, lr=config.critic_lr)
        self.buffer = ReplayBuffer(config.buffer_capacity, self.state_dim, self.action_dim)

    def observe(self, tr: Transition) -> None:
        self.buffer.add(tr)

    def _targets(self, batch) -> np.ndarray:
        c = self.config
        a2, _ = self._actor_forward(self.actor_target, batch["next_state"])
        if c.target_noise > 0.0:
            eps = self.rng.normal(0.0, c.target_noise, size=a2.shape)
            eps = np.clip(eps, -c.target_clip, c.target_clip)
        else:
            eps = 0.0
        a2 = np.clip(a2 + eps, -1.0, 1.0)
        q1, _, _ = self._critic_values(self.critic_target, self.q1,
                                       batch["next_state"], a2)
        q2, _, _ = self._critic_values(self.critic_target, self.q2,
                                       batch["next_state"], a2)
        return batch["reward"] + c.gamma * (1.0 - batch["done"]) * np.minimum(q1, q2)

    def update(self) -> dict[str, float]:
        c = self.config
        if len(self.buffer) < max(c.min_fill, c.batch_size):
            return {}
        batch = self.buffer.sample(c.batch_size, self.rng)
        y = self._targets(batch)

        grads: dict[str, np.ndarray] = {}
        losses = {}
        for name, mlp in (("q1", self.q1), ("q2", self.q2)):
            q, cache, params = self._critic_values(self.critic_store, mlp,
                                                   batch["state"], batch["action"])
            loss, dq = mse_loss(q, y)
            if not np.isfinite(loss):
                raise FloatingPointError("non-finite critic loss")
            g, _ = mlp.backward(params, cache, dq[:, None])
            grads.update(g)
            losses[f"{name}_loss"] = loss
        self.critic_opt.step(self.critic_store, grads)

        self.updates += 1
        if self.updates % c.policy_delay == 0:
            a_pi, actor_cache = self._actor_forward(self.actor_store, batch["state"])
            q_mean, dq_da = self._critic_action_grad(self.critic_store, self.q1,
                                                     batch["state"], a_pi)
            if not np.isfinite(q_mean):
                raise FloatingPointError("non-finite actor objective")
            actor_params = {k: self.actor_store[k] for k in self.actor_store.names()}
            actor_grads, _ = self.actor.backward(actor_params, actor_cache, -dq_da)
            self.actor_opt.step(self.actor_store, actor_grads)
            soft_update(self.actor_target, self.actor_store, c.tau)
            soft_update(self.critic_target, self.critic_store, c.tau)
            losses["actor_loss"] = -q_mean
        return losses


class A2cAgent(_HyperActionAgent):
    """On-policy advantage actor-critic with a Gaussian hyper-action policy."""

    def __init__(self, featurizer, catalog, k, config: AcConfig = AcConfig(),
                 embeddings=None):
        super().__init__(featurizer, catalog, k, config, embeddings)
        self.actor_store.add("log_std", (self.action_dim,), init="zeros")
        self.actor_store["log_std"] = np.full(self.action_dim,
                                              np.log(config.init_std), dtype=np.float32)
        hidden = 2 * self.state_dim
        self.critic_store = ParamStore(seed=config.seed + 1)
        self.critic = Mlp(self.critic_store, "v", (self.state_dim, hidden, 1))
        self.actor_opt = AdamState(self.actor_store, lr=config.actor_lr)
        self.critic_opt = AdamState(self.critic_store, lr=config.critic_lr)
        self._rollout: list[Transition] = []

    def _policy_vectors(self, states: np.ndarray, explore: bool) -> np.ndarray:
        mu, _ = self._actor_forward(self.actor_store, states)
        a = mu.astype(np.float64)
        if explore:
            std = np.exp(self.actor_store["log_std"].astype(np.float64))
            a = a + std[None, :] * self.rng.normal(size=a.shape)
        return a

    def observe(self, tr: Transition) -> None:
        self._rollout.append(tr)

    def _values(self, states: np.ndarray):
        params = {k: self.critic_store[k] for k in self.critic_store.names()}
        v, cache = self.critic.forward(params, states)
        return v[:, 0], cache, params

    def update(self) -> dict[str, float]:
        c = self.config
        if len(self._rollout) < c.rollout:
            return {}
        batch = self._rollout
        self._rollout = []
        s = np.stack([t.state for t in batch])
        a = np.stack([t.hyper_action for t in batch]).astype(np.float64)
        r = np.array([t.reward for t in batch], dtype=np.float64)
        s2 = np.stack([t.next_state for t in batch])
        done = np.array([1.0 if t.done else 0.0 for t in batch])

        v2, _, _ = self._values(s2)
        target = r + c.gamma * (1.0 - done) * v2
        v, v_cache, v_params = self._values(s)
        critic_loss, dv = mse_loss(v, target)
        if not np.isfinite(critic_loss):
            raise FloatingPointError("non-finite critic loss")
        critic_grads, _ = self.critic.backward(v_params, v_cache, dv[:, None])
        self.critic_opt.step(self.critic_store, critic_grads)

        adv = target - v
        n = s.shape[0]
        mu, mu_cache = self._actor_forward(self.actor_store, s)
        log_std = self.actor_store["log_std"].astype(np.float64)
        var = np.exp(2.0 * log_std)
        diff = a - mu
        log_prob = (-0.5 * (diff * diff / var).sum(axis=1)
                    - log_std.sum() - 0.5 * a.shape[1] * np.log(2 * np.pi))
        pg_loss = float(-(adv * log_prob).mean())
        entropy = float(log_std.sum() + 0.5 * a.shape[1] * np.log(2 * np.pi * np.e))
        actor_loss = pg_loss - c.entropy_coef * entropy
        if not np.isfinite(actor_loss):
            raise FloatingPointError("non-finite actor loss")

        dmu = -(adv[:, None] * diff / var) / n
        dlog_std = (-(adv[:, None] * (diff * diff / var - 1.0)).sum(axis=0) / n
                    - c.entropy_coef)
        actor_params = {k: self.actor_store[k] for k in self.actor_store.names()}
        actor_grads, _ = self.actor.backward(actor_params, mu_cache, dmu)
        actor_grads["log_std"] = dlog_std
        self.actor_opt.step(self.actor_store, actor_grads)
        self.updates += 1
        return {"critic_loss": critic_loss, "actor_loss": actor_loss,
                "pg_loss": pg_loss, "entropy": entropy}
