"""Soft actor-critic over factored discrete actions.

Each action dimension ``d`` has its own group of outputs (a "branch") in both
the actor and the critics.  The critic branch ``Q_d(s, a_d)`` regresses onto a
shared soft Bellman target whose next-state value is the mean of the
per-branch soft values; the actor branch is the categorical policy
``softmax(z_d / temperature)`` pulled towards ``exp(Q_d / temperature)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from ..config import ScenarioConfig
from .mlp import Mlp
from .replay import ReplayBuffer, TERMINAL, MID_EPISODE

CHECKPOINT_FORMAT = "hrlurllc-policy"
CHECKPOINT_VERSION = 1


class DivergenceError(FloatingPointError):
    pass


@dataclass
class AgentHyperparams:
    discount: float = 0.1
    learning_rate: float = 3e-4
    batch_size: int = 200
    temperature: float = 0.2
    target_rate: float = 0.005
    replay_capacity: int = 100_000
    hidden: tuple[int, ...] = (128, 128)
    updates_per_step: int = 1
    warmup_steps: int = 0  # uniform-random actions before this many stores
    precision: str = "float32"  # network arithmetic; float64 for exact checks
    # exploration schedule, counted in exploratory actions: full temperature for
    # explore_hold actions, then geometric decay to explore_floor over explore_decay
    explore_floor: float | None = None
    explore_hold: int = 0
    explore_decay: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.precision not in ("float32", "float64"):
            raise ValueError("precision must be float32 or float64")
        if self.explore_floor is not None and not 0 < self.explore_floor <= self.temperature:
            raise ValueError("explore_floor must lie in (0, temperature]")
        if self.explore_hold < 0 or self.explore_decay < 0:
            raise ValueError("explore_hold and explore_decay must be >= 0")

    def behaviour_temperature(self, n_explored: int) -> float:
        """Sampling temperature after ``n_explored`` exploratory actions."""
        if self.explore_floor is None:
            return self.temperature
        if n_explored < self.explore_hold:
            return self.temperature
        if self.explore_decay == 0:
            return self.explore_floor
        frac = min(1.0, (n_explored - self.explore_hold) / self.explore_decay)
        return self.temperature * (self.explore_floor / self.temperature) ** frac

    @classmethod
    def from_scenario(cls, cfg: ScenarioConfig, timescale: str = "fast") -> "AgentHyperparams":
        """Hyperparameters of an agent acting every fast step or every ``c``-th."""
        if timescale not in ("fast", "slow"):
            raise ValueError("timescale must be fast or slow")
        per_episode = cfg.n_low_steps // (cfg.timescale_ratio if timescale == "slow" else 1)
        hold = getattr(cfg, f"explore_{timescale}_hold") * per_episode
        decay = getattr(cfg, f"explore_{timescale}_decay") * per_episode
        return cls(cfg.discount, cfg.learning_rate, cfg.batch_size, cfg.entropy_temperature,
                   cfg.target_update_rate, cfg.replay_capacity, tuple(cfg.hidden_sizes),
                   cfg.updates_per_step, explore_floor=cfg.explore_floor or None,
                   explore_hold=hold, explore_decay=decay)


@dataclass(frozen=True)
class BranchingHead:
    level_sets: tuple[tuple, ...]

    def __post_init__(self) -> None:
        sets = tuple(tuple(levels) for levels in self.level_sets)
        if not sets or any(len(s) == 0 for s in sets):
            raise ValueError("every action dimension needs at least one level")
        object.__setattr__(self, "level_sets", sets)

    @property
    def sizes(self) -> list[int]:
        return [len(s) for s in self.level_sets]

    @property
    def width(self) -> int:
        return sum(self.sizes)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)[:-1]]).astype(int)

    def split(self, out: np.ndarray) -> list[np.ndarray]:
        """Per-dimension slices of a ``(..., width)`` output."""
        return [out[..., o:o + n] for o, n in zip(self.offsets, self.sizes)]

    def values(self, indices: Sequence[int]) -> list:
        return [levels[int(i)] for levels, i in zip(self.level_sets, indices)]

    def indices(self, values: Sequence) -> np.ndarray:
        return np.array([levels.index(v) for levels, v in zip(self.level_sets, values)])


def softmax_with_log(z: np.ndarray, temperature: float):
    scaled = z / temperature
    scaled = scaled - scaled.max(axis=-1, keepdims=True)
    log_p = scaled - np.log(np.exp(scaled).sum(axis=-1, keepdims=True))
    return np.exp(log_p), log_p


class FixedAgent:
    """Always emits the same level values; never learns."""

    def __init__(self, level_sets: Sequence[Sequence], values: Sequence):
        self.head = BranchingHead(tuple(tuple(s) for s in level_sets))
        self.fixed = list(values)
        self.idx = self.head.indices(self.fixed)

    @property
    def level_sets(self):
        return self.head.level_sets

    def act_indices(self, state, explore: bool = False) -> np.ndarray:
        return self.idx.copy()

    def act(self, state, explore: bool = False) -> list:
        return list(self.fixed)

    def store(self, *args, **kwargs) -> None:
        pass

    def learn_step(self):
        return None


class BranchingSacAgent:
    def __init__(self, state_dim: int, level_sets: Sequence[Sequence],
                 hp: AgentHyperparams | None = None, seed=0):
        self.hp = hp or AgentHyperparams()
        self.head = BranchingHead(tuple(tuple(s) for s in level_sets))
        self.state_dim = int(state_dim)
        rng = np.random.default_rng(seed)
        sizes = [self.state_dim, *self.hp.hidden, self.head.width]
        dtype = np.dtype(self.hp.precision)
        self.actor = Mlp(sizes, rng, out_scale=0.01, dtype=dtype)
        self.critics = [Mlp(sizes, rng, out_scale=0.1, dtype=dtype) for _ in range(2)]
        self.targets = [c.copy() for c in self.critics]
        self.buffer = ReplayBuffer(self.hp.replay_capacity, self.state_dim,
                                   len(self.head.sizes), seed=rng.integers(2 ** 63))
        self.rng = np.random.default_rng(rng.integers(2 ** 63))
        self.n_updates = 0
        self.n_stored = 0
        self.n_explored = 0

    @property
    def level_sets(self):
        return self.head.level_sets

    def probabilities(self, state) -> list[np.ndarray]:
        logits = self.actor(np.asarray(state, float)).astype(float)
        return [softmax_with_log(z, self.hp.temperature)[0] for z in self.head.split(logits)]

    def _branches(self, out: np.ndarray):
        """``(n, D, L)`` view when every dimension has ``L`` levels, else a list."""
        sizes = self.head.sizes
        if len(set(sizes)) == 1:
            return out.reshape(out.shape[0], len(sizes), sizes[0])
        return None

    def act_indices(self, state, explore: bool = False) -> np.ndarray:
        state = np.asarray(state, float)
        if state.shape != (self.state_dim,):
            raise ValueError(f"state has shape {state.shape}, expected ({self.state_dim},)")
        if explore and self.n_stored < self.hp.warmup_steps:
            return np.array([self.rng.integers(n) for n in self.head.sizes])
        logits = self.actor(state).astype(float)
        if not np.all(np.isfinite(logits)):
            raise DivergenceError("actor produced non-finite logits")
        if not explore:
            return np.array([int(np.argmax(z)) for z in self.head.split(logits)])
        tau = self.hp.behaviour_temperature(self.n_explored)
        self.n_explored += 1
        out = []
        for z in self.head.split(logits):
            p, _ = softmax_with_log(z, tau)
            out.append(int(self.rng.choice(z.size, p=p)))
        return np.array(out)

    def act(self, state, explore: bool = False) -> list:
        return self.head.values(self.act_indices(state, explore))

    def store(self, state, action_idx, reward: float, next_state, kind: int = MID_EPISODE) -> None:
        self.buffer.push(state, action_idx, reward, next_state, kind)
        self.n_stored += 1

    def ready(self) -> bool:
        return len(self.buffer) >= self.hp.batch_size

    def learn_step(self, batch=None) -> dict | None:
        """One SGD step on critics and actor; ``None`` until the buffer fills."""
        if batch is None:
            if not self.ready():
                return None
            batch = self.buffer.sample(self.hp.batch_size)
        s, a, r, s2, kinds = batch
        n = s.shape[0]
        hp = self.hp
        tau = hp.temperature
        offsets = self.head.offsets
        n_dims = len(offsets)
        uniform = len(set(self.head.sizes)) == 1

        def soft_terms(logits, q):
            """Per-branch probabilities, log-probabilities and Q values."""
            if uniform:
                shape = (n, n_dims, self.head.sizes[0])
                p, log_p = softmax_with_log(logits.reshape(shape), tau)
                return [(p, log_p, q.reshape(shape))]
            return [(*softmax_with_log(z, tau), qd)
                    for z, qd in zip(self.head.split(logits), self.head.split(q))]

        # soft Bellman target
        next_logits = self.actor(s2).astype(float)
        q_next = np.minimum(self.targets[0](s2), self.targets[1](s2)).astype(float)
        v_next = np.zeros(n)
        for p, log_p, q in soft_terms(next_logits, q_next):
            v = np.sum(p * (q - tau * log_p), axis=-1)
            v_next += v.sum(axis=1) if v.ndim == 2 else v
        v_next /= n_dims
        not_done = (kinds != TERMINAL).astype(float)
        y = r + hp.discount * not_done * v_next
        if not np.all(np.isfinite(y)):
            raise DivergenceError(f"non-finite Bellman target after {self.n_updates} updates")

        rows = np.arange(n)[:, None]
        cols = offsets[None, :] + a
        critic_losses = []
        for critic in self.critics:
            q, acts = critic.forward(s, keep=True)
            err = q[rows, cols].astype(float) - y[:, None]
            critic_losses.append(float(np.mean(err ** 2)))
            dq = np.zeros(q.shape)
            dq[rows, cols] = 2.0 * err / (n * n_dims)
            critic.sgd(critic.backward(acts, dq), hp.learning_rate)

        logits, acts = self.actor.forward(s, keep=True)
        q_now = np.minimum(self.critics[0](s), self.critics[1](s)).astype(float)
        grads, entropies, actor_loss = [], [], 0.0
        for p, log_p, q in soft_terms(logits.astype(float), q_now):
            f = tau * log_p - q
            per_sample = np.sum(p * f, axis=-1, keepdims=True)
            actor_loss += float(np.sum(per_sample) / n)
            grads.append((p * (f - per_sample) / (tau * n)).reshape(n, -1))
            h = -np.sum(p * log_p, axis=-1).mean(axis=0)
            entropies.extend(np.atleast_1d(h).tolist())
        self.actor.sgd(self.actor.backward(acts, np.concatenate(grads, axis=1)), hp.learning_rate)

        for target, critic in zip(self.targets, self.critics):
            target.soft_update(critic, hp.target_rate)
        self.n_updates += 1

        diag = {"critic_loss": float(np.mean(critic_losses)), "actor_loss": actor_loss,
                "entropy": entropies}
        if not (np.isfinite(diag["critic_loss"]) and np.isfinite(actor_loss)):
            raise DivergenceError(f"non-finite loss after {self.n_updates} updates: {diag}")
        return diag

    def q_values(self, state) -> list[np.ndarray]:
        q = np.minimum(self.critics[0](np.asarray(state, float)),
                       self.critics[1](np.asarray(state, float)))
        return self.head.split(q.astype(float))

    # -- checkpoints ---------------------------------------------------------
    def to_dict(self) -> dict:
        def net(m: Mlp) -> dict:
            return {"sizes": m.sizes, "weights": [w.tolist() for w in m.weights],
                    "biases": [b.tolist() for b in m.biases]}
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "state_dim": self.state_dim,
            "level_sets": [list(s) for s in self.head.level_sets],
            "hyperparams": asdict(self.hp),
            "actor": net(self.actor),
            "critics": [net(c) for c in self.critics],
            "targets": [net(t) for t in self.targets],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BranchingSacAgent":
        if data.get("format") != CHECKPOINT_FORMAT or data.get("version") != CHECKPOINT_VERSION:
            raise ValueError("unsupported checkpoint format")
        hp_fields = dict(data["hyperparams"])
        hp_fields["hidden"] = tuple(hp_fields["hidden"])
        agent = cls(data["state_dim"], data["level_sets"], AgentHyperparams(**hp_fields))

        def load(m: Mlp, d: dict) -> None:
            if list(d["sizes"]) != m.sizes:
                raise ValueError("checkpoint layer sizes do not match")
            m.weights = [np.array(w, dtype=m.dtype).reshape(a, b)
                         for w, a, b in zip(d["weights"], m.sizes[:-1], m.sizes[1:])]
            m.biases = [np.array(b, dtype=m.dtype) for b in d["biases"]]

        load(agent.actor, data["actor"])
        for m, d in zip(agent.critics, data["critics"]):
            load(m, d)
        for m, d in zip(agent.targets, data["targets"]):
            load(m, d)
        return agent

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "BranchingSacAgent":
        return cls.from_dict(json.loads(Path(path).read_text()))
