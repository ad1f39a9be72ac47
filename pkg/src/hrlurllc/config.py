"""Scenario configuration and its ``key=value`` file format.

Every field of :class:`ScenarioConfig` is one key in the file; units are part
of the key name.  Lists are comma separated.  Lines starting with ``#`` are
comments.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

from .kpi import DEFAULT_TICK_S, to_ticks, SignalError

FEATURE_NAMES = ("plr", "downtime", "delay", "harq_tx", "rb_used",
                 "sinr_db", "path_gain_db", "rlc_buffer")


class ConfigError(ValueError):
    """Raised with the full list of offending keys."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass
class ScenarioConfig:
    # topology and traffic
    n_gnbs: int = 2
    devices_per_gnb: tuple[int, ...] = (5, 5)
    tti_s: float = 0.0005
    traffic_period_s: float = 0.002
    delay_bound_s: float = 0.0025
    survival_time_s: float = 0.005
    power_levels_w: tuple[float, ...] = (0.008, 0.02)
    retx_levels: tuple[int, ...] = (1, 2)
    episode_s: float = 10.0
    low_step_s: float = 0.1
    timescale_ratio: int = 5
    rng_seed: int = 0
    harq_feedback_delay_tti: int = 0
    capacity_per_tti: int = 0  # 0 = every device schedulable every TTI
    baseline_power_w: float = 0.02
    baseline_max_tx: int = 2

    # radio and channel
    noise_power_w: float = 6.3e-13
    carrier_ghz: float = 2.6
    bandwidth_mhz: float = 20.0
    bler_midpoint_db: float = 5.0
    bler_slope_per_db: float = 1.0
    harq_combining_gain_db: float = 3.0
    gain_mode: str = "static"  # static | ingested | gauss_markov
    gain_file: str = ""
    gain_update_period_s: float = 0.0005
    layout_seed: int = 6
    floor_x_m: float = 40.0
    floor_y_m: float = 25.0
    gnb_height_m: float = 8.0
    device_height_m: float = 1.5
    pathloss_exponent: float = 3.0
    shadowing_std_db: float = 8.0
    gm_sigma_db: float = 2.0
    gm_corr_time_s: float = 0.05

    # rewards
    omega: float = 0.5
    eta: float = 2.0
    reward_mode: str = "risk_sensitive"  # average | risk_sensitive

    # learning
    discount: float = 0.1
    learning_rate: float = 0.0003
    batch_size: int = 200
    hidden_sizes: tuple[int, ...] = (128, 128)
    entropy_temperature: float = 0.2
    target_update_rate: float = 0.005
    replay_capacity: int = 100_000
    updates_per_step: int = 1
    # behaviour temperature decays geometrically to the floor; episodes per timescale
    explore_floor: float = 0.02  # 0 disables the schedule
    explore_fast_hold: int = 0
    explore_fast_decay: int = 20
    explore_slow_hold: int = 15
    explore_slow_decay: int = 20
    n_episodes: int = 300
    convergence_window: int = 20
    convergence_tol: float = 0.01
    convergence_patience: int = 3
    n_eval_seeds: int = 10

    # feature normalisation ranges (affine map to [-1, 1])
    feat_plr_min: float = 0.0
    feat_plr_max: float = 1.0
    feat_downtime_min: float = 0.0
    feat_downtime_max: float = 0.1
    feat_delay_min: float = 0.0
    feat_delay_max: float = 0.0025
    feat_harq_tx_min: float = 0.0
    feat_harq_tx_max: float = 5.0
    feat_rb_used_min: float = 0.0
    feat_rb_used_max: float = 1.0
    feat_sinr_db_min: float = -10.0
    feat_sinr_db_max: float = 40.0
    feat_path_gain_db_min: float = -120.0
    feat_path_gain_db_max: float = -40.0
    feat_rlc_buffer_min: float = 0.0
    feat_rlc_buffer_max: float = 4.0

    tick_s: float = field(default=DEFAULT_TICK_S, metadata={"file": False})

    def __post_init__(self) -> None:
        self.devices_per_gnb = tuple(int(v) for v in self.devices_per_gnb)
        self.power_levels_w = tuple(float(v) for v in self.power_levels_w)
        self.retx_levels = tuple(int(v) for v in self.retx_levels)
        self.hidden_sizes = tuple(int(v) for v in self.hidden_sizes)

    # derived quantities ----------------------------------------------------
    @property
    def n_devices(self) -> int:
        return sum(self.devices_per_gnb)

    def ticks(self, seconds: float) -> int:
        return to_ticks(seconds, self.tick_s)

    @property
    def n_low_steps(self) -> int:
        return self.ticks(self.episode_s) // self.ticks(self.low_step_s)

    @property
    def ttis_per_step(self) -> int:
        return self.ticks(self.low_step_s) // self.ticks(self.tti_s)

    def device_gnb(self) -> list[int]:
        """Serving gNB index for each global device index."""
        out = []
        for b, n in enumerate(self.devices_per_gnb):
            out.extend([b] * n)
        return out

    def gnb_devices(self, b: int) -> range:
        first = sum(self.devices_per_gnb[:b])
        return range(first, first + self.devices_per_gnb[b])

    def validate(self) -> "ScenarioConfig":
        problems: list[str] = []

        def need(ok: bool, key: str, msg: str) -> None:
            if not ok:
                problems.append(f"{key}: {msg}")

        need(self.n_gnbs >= 1, "n_gnbs", "must be >= 1")
        need(len(self.devices_per_gnb) == self.n_gnbs, "devices_per_gnb",
             f"needs {self.n_gnbs} entries")
        need(all(n >= 1 for n in self.devices_per_gnb), "devices_per_gnb", "entries must be >= 1")
        for key in ("tti_s", "traffic_period_s", "delay_bound_s", "survival_time_s",
                    "episode_s", "low_step_s", "gain_update_period_s"):
            value = getattr(self, key)
            try:
                n = self.ticks(value)
                need(n >= 0, key, "must be non-negative")
            except SignalError as exc:
                problems.append(f"{key}: {exc}")
        if not problems:
            tti = self.ticks(self.tti_s)
            low = self.ticks(self.low_step_s)
            need(tti > 0, "tti_s", "must be positive")
            if tti > 0:
                need(low > 0 and low % tti == 0, "low_step_s", "must be a multiple of tti_s")
                need(self.ticks(self.traffic_period_s) % tti == 0, "traffic_period_s",
                     "must be a multiple of tti_s")
                need(self.ticks(self.delay_bound_s) >= tti, "delay_bound_s", "must be >= tti_s")
                gp = self.ticks(self.gain_update_period_s)
                need(gp > 0 and gp % tti == 0, "gain_update_period_s",
                     "must be a positive multiple of tti_s")
            need(self.timescale_ratio >= 1, "timescale_ratio", "must be >= 1")
            if low > 0 and self.timescale_ratio >= 1:
                need(self.ticks(self.episode_s) % (low * self.timescale_ratio) == 0
                     and self.ticks(self.episode_s) > 0,
                     "episode_s", "must be a positive multiple of timescale_ratio * low_step_s")
        for key in ("power_levels_w", "retx_levels"):
            levels = getattr(self, key)
            need(len(levels) > 0, key, "must be nonempty")
            need(list(levels) == sorted(set(levels)), key, "must be sorted and distinct")
        need(all(p > 0 for p in self.power_levels_w), "power_levels_w", "must be positive")
        need(all(r >= 1 for r in self.retx_levels), "retx_levels", "must be >= 1")
        need(self.noise_power_w > 0, "noise_power_w", "must be positive")
        need(self.bler_slope_per_db > 0, "bler_slope_per_db", "must be positive")
        need(self.harq_combining_gain_db >= 0, "harq_combining_gain_db", "must be >= 0")
        need(self.gain_mode in ("static", "ingested", "gauss_markov"), "gain_mode",
             "must be static, ingested or gauss_markov")
        need(self.gain_mode != "ingested" or bool(self.gain_file), "gain_file",
             "required when gain_mode=ingested")
        need(0.0 < self.omega < 1.0, "omega", "must lie in (0, 1)")
        need(self.eta > 0, "eta", "must be positive")
        need(self.reward_mode in ("average", "risk_sensitive"), "reward_mode",
             "must be average or risk_sensitive")
        need(0.0 <= self.discount < 1.0, "discount", "must lie in [0, 1)")
        need(self.learning_rate > 0, "learning_rate", "must be positive")
        need(self.batch_size >= 1, "batch_size", "must be >= 1")
        need(self.replay_capacity >= self.batch_size, "replay_capacity", "must be >= batch_size")
        need(self.entropy_temperature > 0, "entropy_temperature", "must be positive")
        need(0.0 <= self.explore_floor <= self.entropy_temperature, "explore_floor",
             "must lie in [0, entropy_temperature]")
        for key in ("explore_fast_hold", "explore_fast_decay", "explore_slow_hold",
                    "explore_slow_decay"):
            need(getattr(self, key) >= 0, key, "must be >= 0")
        need(0.0 < self.target_update_rate <= 1.0, "target_update_rate", "must lie in (0, 1]")
        need(self.convergence_window >= 1, "convergence_window", "must be >= 1")
        need(self.convergence_tol > 0, "convergence_tol", "must be positive")
        need(self.convergence_patience >= 1, "convergence_patience", "must be >= 1")
        need(self.n_eval_seeds >= 1, "n_eval_seeds", "must be >= 1")
        need(self.harq_feedback_delay_tti >= 0, "harq_feedback_delay_tti", "must be >= 0")
        need(self.capacity_per_tti >= 0, "capacity_per_tti", "must be >= 0")
        for name in FEATURE_NAMES:
            lo, hi = getattr(self, f"feat_{name}_min"), getattr(self, f"feat_{name}_max")
            need(hi > lo, f"feat_{name}_max", "must exceed the matching _min")
        if problems:
            raise ConfigError(problems)
        return self

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


def _file_fields():
    return [f for f in fields(ScenarioConfig) if f.metadata.get("file", True)]


def _format(value) -> str:
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(raw: str, default):
    if isinstance(default, tuple):
        kind = type(default[0]) if default else float
        return tuple(kind(v) for v in raw.split(",") if v.strip())
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def dumps(cfg: ScenarioConfig) -> str:
    lines = [f"{f.name}={_format(getattr(cfg, f.name))}" for f in _file_fields()]
    return "\n".join(lines) + "\n"


def loads(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    base = base or ScenarioConfig()
    known = {f.name: f for f in _file_fields()}
    changes, problems = {}, []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected key=value")
            continue
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in known:
            problems.append(f"{key}: unknown key")
            continue
        try:
            changes[key] = _parse(raw, getattr(base, key))
        except ValueError:
            problems.append(f"{key}: cannot parse {raw!r}")
    if problems:
        raise ConfigError(problems)
    return base.replace(**changes).validate()


def load(path: str | Path) -> ScenarioConfig:
    return loads(Path(path).read_text())


def save(cfg: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(dumps(cfg))
