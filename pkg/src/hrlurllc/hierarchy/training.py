"""Agent construction, training until convergence, and greedy evaluation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..config import ScenarioConfig
from ..features import PER_DEVICE
from ..learn import AgentHyperparams, BranchingSacAgent
from ..netsim import Simulator
from ..rewards import RewardConfig
from .orchestrator import (ConvergenceDetector, EpisodeLog, PlacementError, SignalLedger,
                           joint_convergence, low_agent_name, run_episode)

TRAIN, EVAL = 0, 1


def episode_seed(run_seed: int, episode: int, phase: int = TRAIN) -> int:
    """Simulator seed of one episode.  Evaluation seeds depend only on the
    run seed, so every setup is evaluated on the same channel draws."""
    return int(np.random.SeedSequence([run_seed, phase, episode]).generate_state(1)[0])


def agent_specs(framework: str, cfg: ScenarioConfig) -> dict[str, tuple[int, list]]:
    """``name -> (state length, level sets)`` for every agent of ``framework``."""
    U = cfg.n_devices
    power = [cfg.power_levels_w] * U
    if framework == "flat_rl":
        return {"flat": (U * PER_DEVICE, power + [cfg.retx_levels] * U)}
    if framework == "hrl":
        specs = {"high": (U * PER_DEVICE, power)}
        for b in range(cfg.n_gnbs):
            n = len(cfg.gnb_devices(b))
            specs[low_agent_name(b)] = (n * PER_DEVICE, [cfg.retx_levels] * n)
        return specs
    if framework == "fixed_baseline":
        return {}
    raise PlacementError(f"unknown framework {framework!r}")


def build_agents(framework: str, cfg: ScenarioConfig, seed: int,
                 hp: AgentHyperparams | None = None) -> dict[str, BranchingSacAgent]:
    """Fresh agents; ``hp`` overrides the scenario hyperparameters for all of them."""
    agents = {}
    for i, (name, (dim, levels)) in enumerate(agent_specs(framework, cfg).items()):
        agent_hp = hp or AgentHyperparams.from_scenario(cfg, "slow" if name == "high" else "fast")
        agents[name] = BranchingSacAgent(dim, levels, agent_hp, seed=[seed, i])
    return agents


@dataclass
class TrainingRun:
    framework: str
    seed: int
    agents: dict
    rewards: dict[str, list[float]] = field(default_factory=dict)
    episodes: int = 0
    converged_at: int | None = None
    ledger: SignalLedger = field(default_factory=SignalLedger)

    @property
    def signals(self) -> int:
        return self.ledger.total(phase="train")


def train(framework: str, cfg: ScenarioConfig, seed: int, *, agents: dict | None = None,
          reward_cfg: RewardConfig | None = None, max_episodes: int | None = None,
          detector: ConvergenceDetector | None = None, ledger: SignalLedger | None = None,
          on_episode: Callable[[int, EpisodeLog], None] | None = None) -> TrainingRun:
    """Train until every agent's per-episode mean reward has converged or the
    episode budget runs out."""
    agents = build_agents(framework, cfg, seed) if agents is None else agents
    detector = detector or ConvergenceDetector.from_scenario(cfg)
    budget = cfg.n_episodes if max_episodes is None else max_episodes
    run = TrainingRun(framework, seed, agents, {name: [] for name in agents},
                      ledger=ledger or SignalLedger())
    if not agents:
        return run
    sim = Simulator(cfg)
    for e in range(budget):
        log = run_episode(framework, sim, agents, cfg, seed=episode_seed(seed, e, TRAIN),
                          ledger=run.ledger, phase="train", reward_cfg=reward_cfg)
        for name in agents:
            run.rewards[name].append(log.mean_reward(name))
        run.episodes = e + 1
        if on_episode is not None:
            on_episode(e, log)
        run.converged_at = joint_convergence(run.rewards, detector)
        if run.converged_at is not None:
            break
    run.ledger.convergence_step = run.converged_at
    return run


def evaluate(framework: str, agents: dict, cfg: ScenarioConfig, seed: int, n_episodes: int, *,
             reward_cfg: RewardConfig | None = None, ledger: SignalLedger | None = None,
             on_episode: Callable[[int, EpisodeLog, Simulator], None] | None = None
             ) -> list[EpisodeLog]:
    """Greedy episodes on the evaluation seeds of ``seed``; nothing is learned."""
    sim = Simulator(cfg)
    logs = []
    for i in range(n_episodes):
        log = run_episode(framework, sim, agents, cfg, seed=episode_seed(seed, i, EVAL),
                          ledger=ledger, phase="eval", explore=False, learn=False,
                          reward_cfg=reward_cfg)
        if on_episode is not None:
            on_episode(i, log, sim)
        logs.append(log)
    return logs
