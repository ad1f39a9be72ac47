"""Tabular soft Q-learning with the same factored-action contract as the
neural agent.  Used as an oracle on toy problems."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .replay import ReplayBuffer, TERMINAL, MID_EPISODE
from .sac import BranchingHead


def _soft_value(q: np.ndarray, temperature: float) -> float:
    if temperature == 0:
        return float(q.max())
    m = q.max()
    return float(m + temperature * np.log(np.sum(np.exp((q - m) / temperature))))


def _policy(q: np.ndarray, temperature: float) -> np.ndarray:
    if temperature == 0:
        p = (q == q.max()).astype(float)
        return p / p.sum()
    z = (q - q.max()) / temperature
    e = np.exp(z)
    return e / e.sum()


class TabularSoftQ:
    """Boltzmann policy over a Q-table keyed by a state bin.

    ``temperature=0`` gives hard max backups and greedy behaviour.
    """

    def __init__(self, level_sets: Sequence[Sequence], discount: float, temperature: float = 0.0,
                 learning_rate: float = 1.0, batch_size: int = 1, capacity: int = 10_000,
                 state_dim: int = 1, binner: Callable[[np.ndarray], object] | None = None,
                 seed=0):
        self.head = BranchingHead(tuple(tuple(s) for s in level_sets))
        self.discount = discount
        self.temperature = temperature
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.binner = binner or (lambda s: tuple(np.round(np.asarray(s, float), 6).tolist()))
        self.tables: dict[object, list[np.ndarray]] = {}
        self.rng = np.random.default_rng(seed)
        self.buffer = ReplayBuffer(capacity, state_dim, len(self.head.sizes),
                                   seed=self.rng.integers(2 ** 63))

    @property
    def level_sets(self):
        return self.head.level_sets

    def table(self, state) -> list[np.ndarray]:
        key = self.binner(np.asarray(state, float))
        if key not in self.tables:
            self.tables[key] = [np.zeros(n) for n in self.head.sizes]
        return self.tables[key]

    def value(self, state) -> float:
        return float(np.mean([_soft_value(q, self.temperature) for q in self.table(state)]))

    def act_indices(self, state, explore: bool = False) -> np.ndarray:
        out = []
        for q in self.table(state):
            if explore:
                out.append(int(self.rng.choice(q.size, p=_policy(q, self.temperature))))
            else:
                out.append(int(np.argmax(q)))
        return np.array(out)

    def act(self, state, explore: bool = False) -> list:
        return self.head.values(self.act_indices(state, explore))

    def store(self, state, action_idx, reward: float, next_state, kind: int = MID_EPISODE) -> None:
        self.buffer.push(state, action_idx, reward, next_state, kind)

    def update(self, state, action_idx, reward: float, next_state, kind: int = MID_EPISODE) -> None:
        """Bellman backup of one transition into every branch it touches."""
        target = reward
        if kind != TERMINAL:
            target += self.discount * self.value(next_state)
        for q, a in zip(self.table(state), action_idx):
            q[int(a)] += self.learning_rate * (target - q[int(a)])

    def learn_step(self):
        if len(self.buffer) < self.batch_size:
            return None
        s, a, r, s2, kinds = self.buffer.sample(self.batch_size)
        for i in range(s.shape[0]):
            self.update(s[i], a[i], r[i], s2[i], kinds[i])
        return {"states": len(self.tables)}
