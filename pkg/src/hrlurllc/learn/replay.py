from __future__ import annotations

import numpy as np

MID_EPISODE = 0
TRUNCATED = 1
TERMINAL = 2


class ReplayBuffer:
    """Ring buffer of (state, action indices, reward, next state, step kind)."""

    def __init__(self, capacity: int, state_dim: int, action_dims: int, seed=None):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.rng = np.random.default_rng(seed)
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dims), dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.kinds = np.zeros(capacity, dtype=np.int8)
        self.pos = 0
        self.size = 0

    def push(self, state, action_idx, reward: float, next_state, kind: int = MID_EPISODE) -> None:
        i = self.pos
        self.states[i] = state
        self.actions[i] = action_idx
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.kinds[i] = kind
        self.pos = (self.pos + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, batch_size: int) -> np.ndarray:
        if self.size < batch_size:
            raise ValueError(f"buffer holds {self.size} < batch {batch_size}")
        return self.rng.integers(0, self.size, batch_size)

    def sample(self, batch_size: int):
        idx = self.sample_indices(batch_size)
        return (self.states[idx], self.actions[idx], self.rewards[idx],
                self.next_states[idx], self.kinds[idx])

    def __len__(self) -> int:
        return self.size
