"""Rollout and training loops connecting agents to the simulation environment."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .agents import Agent, LinearPolicy, ObservationFeaturizer, Transition
from .agents.cem import CemAgent
from .core import FeedbackBundle
from .data import LogDataset
from .env import BatchRecEnv, EnvConfig, RetentionParams, TrajectoryLogger
from .uirm import UirmModel


def transition_reward(bundle: FeedbackBundle, mode: str) -> float:
    """Per-step training reward: immediate reward, or negative return day at
    session ends in cross-session mode (zero elsewhere)."""
    if mode == "cross_session":
        return -float(bundle.return_day) if bundle.leave else 0.0
    return bundle.reward


def make_featurizer(dataset: LogDataset, model: UirmModel) -> ObservationFeaturizer:
    """Featurizer over the simulator's learned item embeddings."""
    return ObservationFeaturizer(model.store["item_emb"],
                                 dataset.users.feature_dim, model.schema)


def train_agent(env: BatchRecEnv, agent: Agent, featurizer: ObservationFeaturizer,
                n_updates: int, max_steps: int | None = None) -> list[dict]:
    """Drive the batched environment with the exploring agent until it has
    performed `n_updates` parameter updates; returns the loss trace."""
    obs = env.observations()
    states = [featurizer(o) for o in obs]
    trace: list[dict] = []
    updates = 0
    steps = 0
    cap = max_steps if max_steps is not None else 50 * n_updates
    while updates < n_updates and steps < cap:
        actions, vectors = agent.act_batch(obs, explore=True, states=states)
        obs2, bundles, done, infos = env.step(actions)
        next_states = [featurizer(o) for o in obs2]
        for i in range(env.n_lanes):
            agent.observe(Transition(
                state=states[i],
                hyper_action=vectors[i],
                action=actions[i],
                reward=transition_reward(bundles[i], env.config.mode),
                next_state=next_states[i],
                done=bool(done[i]),
                return_day=bundles[i].return_day,
            ))
        losses = agent.update()
        if losses:
            updates += 1
            trace.append(losses)
        obs = obs2
        states = next_states
        steps += 1
    return trace


def collect_sessions(dataset: LogDataset, model: UirmModel, retention: RetentionParams,
                     config: EnvConfig, agent: Agent, n_sessions: int,
                     n_lanes: int = 16, seed: int = 0,
                     logger: TrajectoryLogger | None = None) -> list[dict]:
    """Roll the (non-exploring) agent until `n_sessions` sessions complete.

    Returns the step records; sessions are counted by leave signals.
    """
    own_logger = logger if logger is not None else TrajectoryLogger()
    env = BatchRecEnv(dataset, model, retention, config, n_lanes=n_lanes,
                      seed=seed, auto_reset=True, logger=own_logger)
    finished = 0
    obs = env.observations()
    while finished < n_sessions:
        actions, _ = agent.act_batch(obs, explore=False)
        obs, bundles, _, _ = env.step(actions)
        finished += sum(b.leave for b in bundles)
    return own_logger.records


def retention_objective(dataset: LogDataset, model: UirmModel,
                        retention: RetentionParams, config: EnvConfig,
                        policy: LinearPolicy, n_sessions: int = 40,
                        n_lanes: int = 8, seed: int = 0) -> Callable[[np.ndarray], float]:
    """Black-box objective for CEM: negative mean return day of a linear policy.

    Every candidate is evaluated on the same seeded environment (common
    random numbers), so the objective is a deterministic function of theta.
    """
    def objective(theta: np.ndarray) -> float:
        agent = CemAgent(policy, theta, dataset.items, config.slate_size)
        records = collect_sessions(dataset, model, retention, config, agent,
                                   n_sessions, n_lanes=n_lanes, seed=seed)
        days = [r["return_day"] for r in records if r["leave"]]
        return -float(np.mean(days[:n_sessions]))

    return objective
