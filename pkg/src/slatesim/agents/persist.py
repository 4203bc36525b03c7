"""Agent checkpointing through the shared parameter container."""

from __future__ import annotations

from dataclasses import asdict

import numpy as np

from ..core import ItemCatalog
from ..nn import read_checkpoint, write_checkpoint
from .actor_critic import A2cAgent, AcConfig, DdpgAgent, Td3Agent, clone_store
from .base import Agent, ObservationFeaturizer, RandomAgent
from .cem import CemAgent, LinearPolicy
from .cf import CfAgent, CfConfig, CfModel


def save_agent(agent: Agent, path) -> None:
    """Persist an agent's parameters and construction metadata."""
    if isinstance(agent, RandomAgent):
        write_checkpoint(path, {}, {"agent": "random", "n_items": agent.n_items,
                                    "k": agent.k})
        return
    if isinstance(agent, CfAgent):
        arrays = {k: agent.model.store[k] for k in agent.model.store.names()}
        meta = {"agent": "cf", "k": agent.k, "n_items": agent.model.n_items,
                "feature_dim": agent.model.feature_dim,
                "config": asdict(agent.model.config)}
        write_checkpoint(path, arrays, meta)
        return
    if isinstance(agent, CemAgent):
        arrays = {"theta": agent.theta.astype(np.float32)}
        meta = {"agent": "cem", "k": agent.k,
                "action_dim": agent.policy.action_dim}
        write_checkpoint(path, arrays, meta)
        return
    if isinstance(agent, (DdpgAgent, Td3Agent, A2cAgent)):
        kind = {"DdpgAgent": "ddpg", "Td3Agent": "td3", "A2cAgent": "a2c"}[type(agent).__name__]
        arrays = {f"actor/{k}": agent.actor_store[k] for k in agent.actor_store.names()}
        arrays.update({f"critic/{k}": agent.critic_store[k]
                       for k in agent.critic_store.names()})
        meta = {"agent": kind, "k": agent.k, "config": asdict(agent.config)}
        write_checkpoint(path, arrays, meta)
        return
    raise TypeError(f"cannot persist agent of type {type(agent).__name__}")


def load_agent(path, featurizer: ObservationFeaturizer | None, catalog: ItemCatalog,
               embeddings: np.ndarray | None = None) -> Agent:
    """Rebuild an agent saved with save_agent.

    Actor-critic agents restart their target networks from the online
    parameters; the checkpoint serves evaluation and warm starts, not exact
    training resumption.
    """
    arrays, meta = read_checkpoint(path)
    kind = meta["agent"]
    if kind == "random":
        return RandomAgent(meta["n_items"], meta["k"])
    if kind == "cf":
        model = CfModel(meta["n_items"], meta["feature_dim"], CfConfig(**meta["config"]))
        model.store.load_dict(arrays)
        return CfAgent(model, meta["k"])
    if featurizer is None:
        raise ValueError(f"agent kind {kind!r} needs a featurizer to rebuild")
    if kind == "cem":
        policy = LinearPolicy(featurizer, meta["action_dim"])
        return CemAgent(policy, arrays["theta"].astype(np.float64), catalog,
                        meta["k"], embeddings=embeddings)
    cls = {"ddpg": DdpgAgent, "td3": Td3Agent, "a2c": A2cAgent}.get(kind)
    if cls is None:
        raise ValueError(f"unknown agent kind {kind!r}")
    agent = cls(featurizer, catalog, meta["k"], config=AcConfig(**meta["config"]),
                embeddings=embeddings)
    agent.actor_store.load_dict({k.split("/", 1)[1]: v for k, v in arrays.items()
                                 if k.startswith("actor/")})
    agent.critic_store.load_dict({k.split("/", 1)[1]: v for k, v in arrays.items()
                                  if k.startswith("critic/")})
    if kind in ("ddpg", "td3"):
        agent.actor_target = clone_store(agent.actor_store)
        agent.critic_target = clone_store(agent.critic_store)
    return agent
