"""Ring replay buffer over preallocated arrays."""

from __future__ import annotations

import numpy as np

from .base import Transition


class ReplayBuffer:
    """Fixed-capacity transition store with uniform without-replacement sampling."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        self.capacity = capacity
        self.state = np.zeros((capacity, state_dim), dtype=np.float32)
        self.action = np.zeros((capacity, action_dim), dtype=np.float32)
        self.reward = np.zeros(capacity, dtype=np.float32)
        self.next_state = np.zeros((capacity, state_dim), dtype=np.float32)
        self.done = np.zeros(capacity, dtype=np.float32)
        self.return_day = np.zeros(capacity, dtype=np.float32)
        self.inserted = 0

    def __len__(self) -> int:
        return min(self.inserted, self.capacity)

    def add(self, tr: Transition) -> None:
        i = self.inserted % self.capacity
        self.state[i] = tr.state
        self.action[i] = tr.hyper_action
        self.reward[i] = tr.reward
        self.next_state[i] = tr.next_state
        self.done[i] = 1.0 if tr.done else 0.0
        self.return_day[i] = tr.return_day
        self.inserted += 1

    def sample(self, batch: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        n = len(self)
        if batch > n:
            raise ValueError("not enough transitions buffered")
        idx = rng.choice(n, size=batch, replace=False)
        return {
            "state": self.state[idx],
            "action": self.action[idx],
            "reward": self.reward[idx],
            "next_state": self.next_state[idx],
            "done": self.done[idx],
            "return_day": self.return_day[idx],
        }
