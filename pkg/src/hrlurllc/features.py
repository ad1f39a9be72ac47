"""Fixed-layout state vectors built from window measurements.

Per device (17 entries, in this order)::

    plr, downtime, delay, harq_tx, rb_used,
    sinr_db   mean, median, p95, p5,
    path_gain mean, median, p95, p5   (dB),
    rlc_buffer mean, median, p95, p5

Each entry is mapped affinely from its configured ``[min, max]`` range onto
``[-1, 1]`` and clipped.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import ScenarioConfig
from .netsim import DeviceWindow, WindowMeasurements

LAYOUT_ID = "dev17-v1"
SCALAR_FEATURES = ("plr", "downtime", "delay", "harq_tx", "rb_used")
SAMPLED_FEATURES = ("sinr_db", "path_gain_db", "rlc_buffer")
STATISTICS = ("mean", "median", "p95", "p5")
PER_DEVICE = len(SCALAR_FEATURES) + len(SAMPLED_FEATURES) * len(STATISTICS)


def feature_names() -> list[str]:
    """Names of the per-device entries in layout order."""
    names = [f"{name}_mean" for name in SCALAR_FEATURES]
    for name in SAMPLED_FEATURES:
        names.extend(f"{name}_{stat}" for stat in STATISTICS)
    return names


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    layout_id: str = LAYOUT_ID

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class NormalizationSpec:
    lows: np.ndarray
    highs: np.ndarray

    @classmethod
    def from_scenario(cls, cfg: ScenarioConfig) -> "NormalizationSpec":
        lows, highs = [], []
        for name in SCALAR_FEATURES:
            lows.append(getattr(cfg, f"feat_{name}_min"))
            highs.append(getattr(cfg, f"feat_{name}_max"))
        for name in SAMPLED_FEATURES:
            lo, hi = getattr(cfg, f"feat_{name}_min"), getattr(cfg, f"feat_{name}_max")
            lows.extend([lo] * len(STATISTICS))
            highs.extend([hi] * len(STATISTICS))
        return cls(np.array(lows), np.array(highs))

    @classmethod
    def identity(cls) -> "NormalizationSpec":
        """Maps [-1, 1] to itself; handy for inspecting raw values."""
        return cls(np.full(PER_DEVICE, -1.0), np.full(PER_DEVICE, 1.0))

    def apply(self, raw: np.ndarray, clip: bool = True) -> np.ndarray:
        scaled = 2.0 * (raw - self.lows) / (self.highs - self.lows) - 1.0
        return np.clip(scaled, -1.0, 1.0) if clip else scaled


def nearest_rank(samples: np.ndarray, q: float) -> float:
    """Smallest sample with at least ``q`` percent of samples at or below it."""
    if samples.size == 0:
        raise FeatureError("percentile of an empty sample list")
    ordered = np.sort(samples)
    rank = max(1, math.ceil(q / 100.0 * ordered.size))
    return float(ordered[rank - 1])


def sample_statistics(samples: np.ndarray) -> list[float]:
    if samples.size == 0:
        raise FeatureError("statistics of an empty sample list")
    finite = np.where(np.isfinite(samples), samples, np.sign(samples) * 1e3)
    return [float(np.mean(finite)), nearest_rank(finite, 50), nearest_rank(finite, 95),
            nearest_rank(finite, 5)]


def raw_device_features(d: DeviceWindow) -> np.ndarray:
    values = [d.packet_loss_rate, d.mean_downtime_s, d.mean_delay_s, d.mean_harq_tx,
              d.mean_rb_used]
    for name in SAMPLED_FEATURES:
        values.extend(sample_statistics(getattr(d, name)))
    return np.array(values)


def device_features(m: WindowMeasurements, device: int,
                    norm: NormalizationSpec) -> FeatureVector:
    """Features of the ``device``-th device (local index) of one gNB window."""
    return FeatureVector(norm.apply(raw_device_features(m.devices[device])))


def assemble_low(m: WindowMeasurements, norm: NormalizationSpec) -> FeatureVector:
    parts = [device_features(m, j, norm).values for j in range(len(m.devices))]
    return FeatureVector(np.concatenate(parts))


def assemble_high(windows: Sequence[Sequence[WindowMeasurements]], norm: NormalizationSpec,
                  c: int | None = None) -> FeatureVector:
    """Global state over ``c`` consecutive low-level windows.

    ``windows[k][b]`` is gNB ``b``'s measurement in the k-th window.  Window
    statistics are recomputed over the pooled samples of all windows.
    """
    if c is not None and len(windows) != c:
        raise FeatureError(f"high-level state needs exactly {c} windows, got {len(windows)}")
    if not windows:
        raise FeatureError("no windows to assemble")
    n_gnbs = len(windows[0])
    merged = [WindowMeasurements.merge([w[b] for w in windows]) for b in range(n_gnbs)]
    return FeatureVector(np.concatenate([assemble_low(m, norm).values for m in merged]))


def zero_state(n_devices: int) -> FeatureVector:
    """Observation used before any window has been measured."""
    return FeatureVector(np.zeros(n_devices * PER_DEVICE))
