"""Average and risk-sensitive rewards over per-device availability and
crossing-rate estimates."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .config import ScenarioConfig
from .kpi import KpiEstimate


class RewardError(ValueError):
    pass


@dataclass(frozen=True)
class RewardConfig:
    omega: float = 0.5
    eta: float = 2.0
    mode: str = "average"

    def __post_init__(self) -> None:
        if not 0.0 < self.omega < 1.0:
            raise RewardError("omega must lie in (0, 1)")
        if self.eta <= 0:
            raise RewardError("eta must be positive")
        if self.mode not in ("average", "risk_sensitive"):
            raise RewardError(f"unknown reward mode {self.mode!r}")

    @classmethod
    def from_scenario(cls, cfg: ScenarioConfig, mode: str | None = None) -> "RewardConfig":
        return cls(cfg.omega, cfg.eta, mode or cfg.reward_mode)


def _pairs(kpis: Sequence) -> list[tuple[float, float]]:
    out = []
    for k in kpis:
        if isinstance(k, KpiEstimate):
            out.append((k.availability, k.crossing_rate))
        else:
            a, psi = k
            out.append((float(a), float(psi)))
    if not out:
        raise RewardError("reward needs at least one device")
    return out


def reward_avg(kpis: Sequence, cfg: RewardConfig) -> float:
    """``(1 / (w U)) * sum(w * a_u - (1 - w) * psi_u)``; at most 1."""
    pairs = _pairs(kpis)
    w = cfg.omega
    total = sum(w * a - (1.0 - w) * psi for a, psi in pairs)
    return total / (w * len(pairs))


def reward_risk(kpis: Sequence, cfg: RewardConfig) -> float:
    """``exp((eta / w) * (r' - w))`` with ``r'`` built from the worst device."""
    pairs = _pairs(kpis)
    w = cfg.omega
    worst = w * min(a for a, _ in pairs) - (1.0 - w) * max(psi for _, psi in pairs)
    return math.exp(cfg.eta / w * (worst - w))


def reward(kpis: Sequence, cfg: RewardConfig) -> float:
    return reward_avg(kpis, cfg) if cfg.mode == "average" else reward_risk(kpis, cfg)


def reward_high(kpis_by_gnb: Sequence[Sequence], cfg: RewardConfig) -> float:
    """Global reward: mean of per-gNB average rewards, or the risk-sensitive
    reward taken over every device of every gNB."""
    if not kpis_by_gnb:
        raise RewardError("reward needs at least one gNB")
    if cfg.mode == "average":
        return sum(reward_avg(k, cfg) for k in kpis_by_gnb) / len(kpis_by_gnb)
    return reward_risk([k for group in kpis_by_gnb for k in group], cfg)
