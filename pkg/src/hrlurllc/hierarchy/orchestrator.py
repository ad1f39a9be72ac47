"""Two-timescale control loop, agent placement and signaling accounting."""
from __future__ import annotations

import csv
import io
import math
import threading
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..config import ScenarioConfig
from ..features import NormalizationSpec, assemble_high, assemble_low, zero_state
from ..learn.replay import MID_EPISODE
from ..netsim import Simulator, WindowMeasurements
from ..rewards import RewardConfig, reward, reward_high

FRAMEWORKS = ("flat_rl", "hrl", "fixed_baseline")


class PlacementError(ValueError):
    pass


def low_agent_name(b: int) -> str:
    return f"low{b}"


@dataclass
class AgentPlacement:
    """Which agents exist and whether each one talks to the gNBs remotely."""

    framework: str
    remote: dict[str, bool] = field(default_factory=dict)

    @classmethod
    def default(cls, framework: str, n_gnbs: int) -> "AgentPlacement":
        if framework == "flat_rl":
            return cls(framework, {"flat": True})
        if framework == "hrl":
            remote = {"high": True}
            remote.update({low_agent_name(b): False for b in range(n_gnbs)})
            return cls(framework, remote)
        if framework == "fixed_baseline":
            return cls(framework, {})
        raise PlacementError(f"unknown framework {framework!r}")

    def validate(self, n_gnbs: int) -> None:
        if self.framework not in FRAMEWORKS:
            raise PlacementError(f"unknown framework {self.framework!r}")
        expected = AgentPlacement.default(self.framework, n_gnbs).remote
        if self.remote != expected:
            raise PlacementError(
                f"{self.framework} needs agents {expected}, placement has {self.remote}")


class SignalLedger:
    """Remote message counters keyed by (direction, agent, phase).

    Safe to update from several threads.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._counts: Counter = Counter()
        self.convergence_step: int | None = None

    def record(self, direction: str, agent: str, phase: str, n: int = 1) -> None:
        if n < 0:
            raise ValueError("ledger counters only grow")
        with self._lock:
            self._counts[(direction, agent, phase)] += n

    def total(self, phase: str | None = None, agent: str | None = None,
              direction: str | None = None) -> int:
        with self._lock:
            return sum(n for (d, a, p), n in self._counts.items()
                       if (phase is None or p == phase) and (agent is None or a == agent)
                       and (direction is None or d == direction))

    def counts(self) -> dict:
        with self._lock:
            return dict(self._counts)


def count_signals(framework: str, n_low: int, c: int, n_gnbs: int = 2) -> int:
    """Closed-form remote message count: one report from and one action to
    every gNB per remote decision."""
    if n_low % c:
        raise ValueError(f"{n_low} low-level steps are not a multiple of c={c}")
    if framework == "flat_rl":
        return 2 * n_gnbs * n_low
    if framework == "hrl":
        return 2 * n_gnbs * (n_low // c)
    if framework == "fixed_baseline":
        return 0
    raise PlacementError(f"unknown framework {framework!r}")


@dataclass(frozen=True)
class Interaction:
    step: int
    agent: str
    reward: float | None
    action: tuple


@dataclass
class EpisodeLog:
    framework: str
    seed: int
    interactions: list[Interaction] = field(default_factory=list)
    device_kpis: list[tuple[float, float]] = field(default_factory=list)
    signals: int = 0

    def count(self, agent_prefix: str) -> int:
        return sum(1 for i in self.interactions if i.agent.startswith(agent_prefix))

    def steps_of(self, agent: str) -> list[int]:
        return [i.step for i in self.interactions if i.agent == agent]

    @property
    def low_level_interactions(self) -> int:
        """Distinct fast-timescale decision points."""
        return len({i.step for i in self.interactions if i.agent in ("flat",)
                    or i.agent.startswith("low")})

    @property
    def high_level_interactions(self) -> int:
        return self.count("high")

    def rewards(self, agent: str) -> list[float]:
        return [i.reward for i in self.interactions if i.agent == agent and i.reward is not None]

    def mean_reward(self, agent: str) -> float:
        r = self.rewards(agent)
        return float(np.mean(r)) if r else math.nan

    def agents(self) -> list[str]:
        return sorted({i.agent for i in self.interactions})

    def to_csv(self) -> str:
        width = max((len(i.action) for i in self.interactions), default=0)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "agent", "reward"] + [f"action_{j}" for j in range(width)])
        for i in self.interactions:
            pad = [""] * (width - len(i.action))
            w.writerow([i.step, i.agent, "" if i.reward is None else repr(i.reward)]
                       + [repr(v) for v in i.action] + pad)
        return buf.getvalue()


def _learn(agent, n: int) -> None:
    for _ in range(n):
        if agent.learn_step() is None:
            break


def run_episode(framework: str, sim: Simulator, agents: dict, cfg: ScenarioConfig, *,
                seed: int | None = None, placement: AgentPlacement | None = None,
                ledger: SignalLedger | None = None, phase: str = "train",
                explore: bool = True, learn: bool = True,
                reward_cfg: RewardConfig | None = None,
                norm: NormalizationSpec | None = None) -> EpisodeLog:
    """Run one episode of ``framework`` on ``sim``.

    ``agents`` maps names to agent objects: ``{"flat": a}`` for flat RL,
    ``{"high": a, "low0": a0, ...}`` for HRL and ``{}`` for the fixed
    baseline.  At every k-th fast step with ``k % c == 0`` the high-level agent
    acts first, then the low-level agents, then the window is simulated.
    """
    B, U = cfg.n_gnbs, cfg.n_devices
    c = cfg.timescale_ratio
    n_low = cfg.n_low_steps
    if n_low % c:
        raise PlacementError(f"episode of {n_low} fast steps is not a multiple of c={c}")
    placement = placement or AgentPlacement.default(framework, B)
    placement.validate(B)
    if set(agents) != set(placement.remote):
        raise PlacementError(f"{framework} needs agents {sorted(placement.remote)}, "
                             f"got {sorted(agents)}")
    reward_cfg = reward_cfg or RewardConfig.from_scenario(cfg)
    norm = norm or NormalizationSpec.from_scenario(cfg)
    own_ledger = SignalLedger()

    def meter(name: str) -> None:
        if placement.remote.get(name):
            for target in (own_ledger, ledger):
                if target is not None:
                    target.record("uplink", name, phase, B)
                    target.record("downlink", name, phase, B)

    sim.reset(seed)
    for agent in agents.values():
        if hasattr(agent, "begin_episode"):
            agent.begin_episode(sim.seed, phase)
    log = EpisodeLog(framework, sim.seed)
    history: list[list[WindowMeasurements]] = []
    prev: dict[str, tuple] = {}  # name -> (state, action indices)
    power = [cfg.baseline_power_w] * U
    retx = {b: [cfg.baseline_max_tx] * len(cfg.gnb_devices(b)) for b in range(B)}

    def decide(name: str, state: np.ndarray, r: float | None, step: int) -> list:
        agent = agents[name]
        if name in prev and r is not None:
            s0, a0 = prev[name]
            agent.store(s0, a0, r, state, MID_EPISODE)
            if learn:
                _learn(agent, cfg.updates_per_step)
        idx = agent.act_indices(state, explore)
        values = [levels[int(i)] for levels, i in zip(agent.level_sets, idx)]
        prev[name] = (state, idx)
        meter(name)
        log.interactions.append(Interaction(step, name, r, tuple(values)))
        return values

    for k in range(n_low):
        last = history[-1] if history else None
        if framework == "hrl":
            if k % c == 0:
                if k == 0:
                    s_h, r_h = zero_state(U).values, None
                else:
                    block = history[-c:]
                    s_h = assemble_high(block, norm, c).values
                    merged = [WindowMeasurements.merge([w[b] for w in block]) for b in range(B)]
                    r_h = reward_high([m.kpis() for m in merged], reward_cfg)
                power = decide("high", s_h, r_h, k)
            for b in range(B):
                n_b = len(cfg.gnb_devices(b))
                if last is None:
                    s_b, r_b = zero_state(n_b).values, None
                else:
                    s_b = assemble_low(last[b], norm).values
                    r_b = reward(last[b].kpis(), reward_cfg)
                retx[b] = decide(low_agent_name(b), s_b, r_b, k)
        elif framework == "flat_rl":
            if last is None:
                s, r = zero_state(U).values, None
            else:
                s = assemble_high([last], norm, 1).values
                r = reward_high([m.kpis() for m in last], reward_cfg)
            values = decide("flat", s, r, k)
            power = values[:U]
            for b in range(B):
                lo = cfg.gnb_devices(b)
                retx[b] = values[U + lo.start:U + lo.stop]
        history.append(sim.run_window({"power": power, "retx": retx}))
        if len(history) > c:
            history.pop(0)

    log.device_kpis = sim.episode_kpis()
    log.signals = own_ledger.total()
    return log


@dataclass(frozen=True)
class ConvergenceDetector:
    window: int = 20
    tolerance: float = 0.01
    patience: int = 3

    def __post_init__(self) -> None:
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")

    @classmethod
    def from_scenario(cls, cfg: ScenarioConfig) -> "ConvergenceDetector":
        return cls(cfg.convergence_window, cfg.convergence_tol, cfg.convergence_patience)


def detect_convergence(series: Sequence[float],
                       detector: ConvergenceDetector | None = None) -> int | None:
    """First 1-based iteration ``t`` at which the moving average over the last
    ``w`` iterations has differed from the one ``w`` iterations earlier by
    less than the tolerance for ``patience`` consecutive iterations."""
    d = detector or ConvergenceDetector()
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise ValueError("empty reward series")
    w = d.window
    csum = np.concatenate([[0.0], np.cumsum(x)])
    streak = 0
    for t in range(2 * w, x.size + 1):
        now = (csum[t] - csum[t - w]) / w
        before = (csum[t - w] - csum[t - 2 * w]) / w
        streak = streak + 1 if abs(now - before) < d.tolerance else 0
        if streak >= d.patience:
            return t
    return None


def joint_convergence(series_by_agent: dict[str, Sequence[float]],
                      detector: ConvergenceDetector | None = None) -> int | None:
    """Iteration by which every agent's series has converged."""
    points = [detect_convergence(s, detector) for s in series_by_agent.values()]
    if not points or any(p is None for p in points):
        return None
    return max(points)
