"""Baseline policies behind one agent interface."""

from .base import (
    Agent, ObservationFeaturizer, RandomAgent, Transition, hyperaction_to_slate,
)
from .buffer import ReplayBuffer
from .cf import CfAgent, CfConfig, CfModel, cf_train
from .actor_critic import A2cAgent, AcConfig, DdpgAgent, Td3Agent, clone_store, soft_update
from .cem import CemAgent, CemConfig, CemResult, LinearPolicy, cem_iterate

__all__ = [
    "Agent", "ObservationFeaturizer", "RandomAgent", "Transition",
    "hyperaction_to_slate", "ReplayBuffer",
    "CfAgent", "CfConfig", "CfModel", "cf_train",
    "A2cAgent", "AcConfig", "DdpgAgent", "Td3Agent", "clone_store", "soft_update",
    "CemAgent", "CemConfig", "CemResult", "LinearPolicy", "cem_iterate",
]
