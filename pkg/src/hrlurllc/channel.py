"""Path gains between gNBs and devices, SINR and a logistic block-error model."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ScenarioConfig

SPEED_OF_LIGHT = 299_792_458.0
LOG_PER_DB = math.log(10.0) / 10.0


class GainFileError(ValueError):
    pass


class MalformedRowError(GainFileError):
    pass


class NonPositiveGainError(GainFileError):
    pass


class DimensionMismatchError(GainFileError):
    pass


@dataclass(frozen=True)
class RadioConfig:
    noise_power: float = 6.3e-13
    carrier_ghz: float = 2.6
    bandwidth_mhz: float = 20.0
    bler_midpoint_db: float = 5.0
    bler_slope: float = 1.0
    harq_combining_gain_db: float = 3.0

    def __post_init__(self) -> None:
        if self.noise_power < 0:
            raise ValueError("noise_power must be >= 0")
        if self.bler_slope <= 0:
            raise ValueError("bler_slope must be positive")
        if self.harq_combining_gain_db < 0:
            raise ValueError("harq_combining_gain_db must be >= 0")

    @classmethod
    def from_scenario(cls, cfg: ScenarioConfig) -> "RadioConfig":
        return cls(cfg.noise_power_w, cfg.carrier_ghz, cfg.bandwidth_mhz,
                   cfg.bler_midpoint_db, cfg.bler_slope_per_db, cfg.harq_combining_gain_db)


@dataclass(frozen=True)
class PathGainField:
    """Linear power gains, shape ``(snapshots, B, U)``.

    For ``gauss_markov`` fields ``log_mean`` holds the per-link stationary
    mean of ``ln g`` and ``sigma`` its stationary standard deviation.
    """

    gains: np.ndarray
    period_s: float
    mode: str = "static"
    log_mean: np.ndarray | None = None
    sigma: float = 0.0
    corr_time_s: float = 0.05

    def __post_init__(self) -> None:
        g = np.asarray(self.gains, dtype=float)
        if g.ndim == 2:
            g = g[None]
        object.__setattr__(self, "gains", g)
        if g.ndim != 3 or g.shape[0] < 1:
            raise DimensionMismatchError(f"gain array must be (S, B, U), got {g.shape}")
        if not np.all(g > 0):
            raise NonPositiveGainError("all path gains must be > 0")
        if self.mode not in ("static", "ingested", "gauss_markov"):
            raise ValueError(f"unknown gain mode {self.mode!r}")
        if self.mode == "gauss_markov" and self.log_mean is None:
            object.__setattr__(self, "log_mean", np.log(g[0]))

    @property
    def shape(self) -> tuple[int, int]:
        return self.gains.shape[1], self.gains.shape[2]

    @property
    def n_snapshots(self) -> int:
        return self.gains.shape[0]

    def at(self, t_s: float) -> np.ndarray:
        """Gain matrix in force at time ``t_s``; time-indexed files repeat cyclically."""
        if self.n_snapshots == 1:
            return self.gains[0]
        k = int(math.floor(t_s / self.period_s + 1e-9)) % self.n_snapshots
        return self.gains[k]

    def snapshot(self, k: int) -> np.ndarray:
        return self.gains[k % self.n_snapshots]


def sinr_linear(serving_gnb: int, device: int, tx_powers: Sequence[float],
                gains: np.ndarray, noise_power: float,
                active: Sequence[bool] | None = None) -> float:
    p = np.asarray(tx_powers, dtype=float)
    if np.any(p < 0):
        raise ValueError("transmit powers must be >= 0")
    n_b = gains.shape[0]
    if not (0 <= serving_gnb < n_b and 0 <= device < gains.shape[1]):
        raise IndexError("gNB or device index out of range")
    act = np.ones(n_b, bool) if active is None else np.asarray(active, bool)
    signal = p[serving_gnb] * gains[serving_gnb, device]
    others = act.copy()
    others[serving_gnb] = False
    interference = float(np.sum(p[others] * gains[others, device]))
    denom = interference + noise_power
    if denom <= 0:
        if signal == 0:
            raise ValueError("degenerate SINR: zero signal over zero noise")
        return math.inf
    return signal / denom


def sinr(serving_gnb: int, device: int, tx_powers: Sequence[float],
         field: PathGainField | np.ndarray, cfg: RadioConfig,
         active: Sequence[bool] | None = None, t_s: float = 0.0) -> float:
    """SINR in dB of ``device`` served by ``serving_gnb``.

    ``tx_powers[b]`` is the power gNB ``b`` radiates on the device's resources;
    only gNBs flagged in ``active`` (all by default) interfere.
    """
    gains = field.at(t_s) if isinstance(field, PathGainField) else np.asarray(field, float)
    lin = sinr_linear(serving_gnb, device, tx_powers, gains, cfg.noise_power, active)
    if lin == 0:
        return -math.inf
    return 10.0 * math.log10(lin)


def bler(sinr_db: float, attempt_index: int, cfg: RadioConfig) -> float:
    """Logistic block-error probability of the ``attempt_index``-th transmission."""
    if attempt_index < 1:
        raise ValueError("attempt_index starts at 1")
    effective = sinr_db + (attempt_index - 1) * cfg.harq_combining_gain_db
    x = cfg.bler_slope * (effective - cfg.bler_midpoint_db)
    if x > 700:
        return 0.0
    if x < -700:
        return 1.0
    return 1.0 / (1.0 + math.exp(x))


def evolve(field: PathGainField, rng_seed, dt: float) -> PathGainField:
    """One AR(1) step of every ``ln g`` around its stationary mean."""
    if field.mode != "gauss_markov":
        raise ValueError("evolve needs a gauss_markov field")
    a = math.exp(-dt / field.corr_time_s) if field.corr_time_s > 0 else 0.0
    current = np.log(field.gains[0])
    if field.sigma == 0:
        return field
    rng = np.random.default_rng(rng_seed)
    xi = rng.standard_normal(current.shape)
    nxt = field.log_mean + a * (current - field.log_mean) + field.sigma * math.sqrt(1 - a * a) * xi
    return replace(field, gains=np.exp(nxt)[None])


def free_space_loss_1m_db(carrier_ghz: float) -> float:
    return 20.0 * math.log10(4.0 * math.pi * carrier_ghz * 1e9 / SPEED_OF_LIGHT)


def layout_positions(cfg: ScenarioConfig, rng: np.random.Generator):
    """gNBs evenly spaced along the long side; each device dropped uniformly
    inside its own gNB's strip of the floor."""
    B = cfg.n_gnbs
    strip = cfg.floor_x_m / B
    gnbs = np.array([[(b + 0.5) * strip, cfg.floor_y_m / 2] for b in range(B)])
    devices = []
    for b, n in enumerate(cfg.devices_per_gnb):
        xs = rng.uniform(b * strip, (b + 1) * strip, n)
        ys = rng.uniform(0.0, cfg.floor_y_m, n)
        devices.extend(zip(xs, ys))
    return gnbs, np.array(devices)


def synthetic_field(cfg: ScenarioConfig) -> PathGainField:
    """Log-distance path loss with log-normal shadowing, drawn from ``layout_seed``."""
    rng = np.random.default_rng(cfg.layout_seed)
    gnbs, devices = layout_positions(cfg, rng)
    dh = cfg.gnb_height_m - cfg.device_height_m
    d2 = np.linalg.norm(gnbs[:, None, :] - devices[None, :, :], axis=-1)
    d3 = np.sqrt(d2 ** 2 + dh ** 2)
    loss_db = (free_space_loss_1m_db(cfg.carrier_ghz)
               + 10.0 * cfg.pathloss_exponent * np.log10(np.maximum(d3, 1.0))
               + rng.normal(0.0, cfg.shadowing_std_db, d3.shape))
    gains = 10.0 ** (-loss_db / 10.0)
    if cfg.gain_mode == "gauss_markov":
        return PathGainField(gains, cfg.gain_update_period_s, "gauss_markov",
                             log_mean=np.log(gains), sigma=cfg.gm_sigma_db * LOG_PER_DB,
                             corr_time_s=cfg.gm_corr_time_s)
    return PathGainField(gains, cfg.gain_update_period_s, "static")


def field_for(cfg: ScenarioConfig) -> PathGainField:
    if cfg.gain_mode == "ingested":
        field = ingest_gains(cfg.gain_file, cfg.gain_update_period_s)
        expected = (cfg.n_gnbs, cfg.n_devices)
        if field.shape != expected:
            raise DimensionMismatchError(f"gain file is {field.shape}, scenario needs {expected}")
        return field
    return synthetic_field(cfg)


def ingest_gains(path: str | Path, period_s: float = 0.0005,
                 expected: tuple[int, int] | None = None) -> PathGainField:
    """Read ``snapshot,gnb,device,gain_linear`` rows into a field.

    Every (snapshot, gnb, device) triple of the implied grid must appear
    exactly once.
    """
    entries: dict[tuple[int, int, int], float] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["snapshot", "gnb", "device", "gain_linear"]:
            raise MalformedRowError(f"{path}: bad header {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise MalformedRowError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                k, b, u = int(row[0]), int(row[1]), int(row[2])
                g = float(row[3])
            except ValueError as exc:
                raise MalformedRowError(f"{path}:{lineno}: {exc}") from None
            if min(k, b, u) < 0:
                raise MalformedRowError(f"{path}:{lineno}: negative index")
            if not g > 0 or not math.isfinite(g):
                raise NonPositiveGainError(f"{path}:{lineno}: gain {row[3]!r} is not positive")
            if (k, b, u) in entries:
                raise MalformedRowError(f"{path}:{lineno}: duplicate entry {(k, b, u)}")
            entries[(k, b, u)] = g
    if not entries:
        raise DimensionMismatchError(f"{path}: no gain rows")
    S = 1 + max(k for k, _, _ in entries)
    B = 1 + max(b for _, b, _ in entries)
    U = 1 + max(u for _, _, u in entries)
    if len(entries) != S * B * U:
        raise DimensionMismatchError(f"{path}: {len(entries)} rows do not fill a {S}x{B}x{U} grid")
    if expected is not None and (B, U) != tuple(expected):
        raise DimensionMismatchError(f"{path}: file is {B}x{U}, expected {expected[0]}x{expected[1]}")
    gains = np.empty((S, B, U))
    for (k, b, u), g in entries.items():
        gains[k, b, u] = g
    return PathGainField(gains, period_s, "static" if S == 1 else "ingested")


def export_gains(field: PathGainField, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["snapshot", "gnb", "device", "gain_linear"])
        S, B, U = field.gains.shape
        for k in range(S):
            for b in range(B):
                for u in range(U):
                    writer.writerow([k, b, u, repr(float(field.gains[k, b, u]))])
