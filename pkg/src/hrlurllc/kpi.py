"""Service-state signals and the availability / crossing-rate KPIs.

Signals are piecewise constant and stored as integer tick breakpoints so that
integrals and crossing counts are exact.  A tick is ``tick_s`` seconds
(10 us by default); every duration used by the simulator is a whole number
of ticks.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path

import numpy as np

DEFAULT_TICK_S = 1e-5


class SignalError(ValueError):
    """Invalid breakpoints, windows or filter parameters."""


def to_ticks(seconds: float, tick_s: float = DEFAULT_TICK_S) -> int:
    """Convert a duration to whole ticks, rejecting off-grid values."""
    exact = seconds / tick_s
    n = int(round(exact))
    if abs(exact - n) > 1e-6:
        raise SignalError(f"{seconds!r} s is not a multiple of the {tick_s!r} s tick")
    return n


def format_seconds(ticks: int, tick_s: float = DEFAULT_TICK_S) -> str:
    """Decimal text for ``ticks * tick_s`` without binary rounding noise."""
    value = Decimal(int(ticks)) * Decimal(repr(tick_s))
    text = format(value.normalize(), "f")
    return text if text != "-0" else "0"


@dataclass(frozen=True)
class BinarySignal:
    """Right-continuous 0/1 signal on ``[0, end)``.

    ``ticks[i]`` is the instant the signal takes ``values[i]``; the first
    breakpoint is at 0 and consecutive values alternate.
    """

    ticks: np.ndarray
    values: np.ndarray
    end: int
    tick_s: float = DEFAULT_TICK_S

    def __post_init__(self) -> None:
        ticks = np.asarray(self.ticks, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.int8)
        object.__setattr__(self, "ticks", ticks)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "end", int(self.end))
        if ticks.ndim != 1 or ticks.shape != values.shape or ticks.size == 0:
            raise SignalError("breakpoints must be a nonempty 1-D sequence")
        if ticks[0] != 0:
            raise SignalError("first breakpoint must be at time 0")
        if ticks.size > 1 and np.any(np.diff(ticks) <= 0):
            raise SignalError("breakpoint times must be strictly increasing")
        if ticks[-1] > self.end:
            raise SignalError("breakpoint beyond the horizon end")
        if np.any((values != 0) & (values != 1)):
            raise SignalError("signal values must be 0 or 1")
        if values.size > 1 and np.any(values[1:] == values[:-1]):
            raise SignalError("consecutive breakpoints must alternate")

    @classmethod
    def from_times(cls, times_s, values, horizon_end_s: float,
                   tick_s: float = DEFAULT_TICK_S) -> "BinarySignal":
        ticks = [to_ticks(t, tick_s) for t in times_s]
        return cls(np.array(ticks, dtype=np.int64), np.asarray(values),
                   to_ticks(horizon_end_s, tick_s), tick_s)

    @classmethod
    def constant(cls, value: int, horizon_end_s: float,
                 tick_s: float = DEFAULT_TICK_S) -> "BinarySignal":
        return cls(np.array([0]), np.array([value]), to_ticks(horizon_end_s, tick_s), tick_s)

    @property
    def times(self) -> np.ndarray:
        return self.ticks * self.tick_s

    @property
    def horizon_end(self) -> float:
        return self.end * self.tick_s

    def value_at(self, t_s: float) -> int:
        i = int(np.searchsorted(self.ticks, to_ticks(t_s, self.tick_s), side="right")) - 1
        return int(self.values[i])

    def runs(self, value: int) -> tuple[np.ndarray, np.ndarray]:
        """Start and end ticks of the maximal runs holding ``value``."""
        starts = self.ticks
        ends = np.append(self.ticks[1:], self.end)
        mask = (self.values == value) & (ends > starts)
        return starts[mask], ends[mask]

    def to_grid(self) -> np.ndarray:
        """One sample per tick on ``[0, end)``; used by test oracles."""
        lengths = np.diff(np.append(self.ticks, self.end))
        return np.repeat(self.values, lengths)


@dataclass(frozen=True)
class KpiWindow:
    t_start: float
    t_end: float

    def __post_init__(self) -> None:
        if not self.t_end > self.t_start:
            raise SignalError("window must have t_end > t_start")

    @property
    def length(self) -> float:
        return self.t_end - self.t_start

    def ticks(self, tick_s: float = DEFAULT_TICK_S) -> tuple[int, int]:
        return to_ticks(self.t_start, tick_s), to_ticks(self.t_end, tick_s)


@dataclass(frozen=True)
class KpiEstimate:
    availability: float
    crossing_rate: float
    downtime_mean: float
    window: KpiWindow


def _ones_except(starts, ends, end: int, tick_s: float) -> BinarySignal:
    """Signal equal to 1 except on sorted, non-touching zero intervals."""
    ticks, values = [0], [1]
    for s, e in zip(starts.tolist(), ends.tolist()):
        if e <= s:
            continue
        if s == 0:
            values[0] = 0
        else:
            ticks.append(s)
            values.append(0)
        if e < end:
            ticks.append(e)
            values.append(1)
    return BinarySignal(np.array(ticks), np.array(values), end, tick_s)


def survival_filter(y: BinarySignal, survival_time: float) -> BinarySignal:
    """Application-layer state: ``Z(t) = max Y`` over ``[max(0, t - T_s), t]``.

    An outage of ``Y`` on ``[s, e)`` only shows up in ``Z`` on
    ``[s + T_s, e)``, except for a run starting at time 0, where the clipped
    window makes ``Z`` follow ``Y`` directly.
    """
    if survival_time < 0:
        raise SignalError("survival_time must be non-negative")
    ts = to_ticks(survival_time, y.tick_s)
    if ts == 0:
        return y
    starts, ends = y.runs(0)
    shifted = np.where(starts == 0, starts, starts + ts)
    return _ones_except(shifted, ends, y.end, y.tick_s)


def _window_ticks(z: BinarySignal, w: KpiWindow) -> tuple[int, int]:
    a, b = w.ticks(z.tick_s)
    if a < 0 or b > z.end:
        raise SignalError(
            f"window [{w.t_start}, {w.t_end}) outside signal domain [0, {z.horizon_end}]")
    return a, b


def uptime_ticks(z: BinarySignal, a: int, b: int) -> int:
    """Integral of ``z`` over ``[a, b)`` in ticks."""
    starts, ends = z.runs(1)
    lo = np.maximum(starts, a)
    hi = np.minimum(ends, b)
    return int(np.clip(hi - lo, 0, None).sum())


def crossings_in(z: BinarySignal, a: int, b: int) -> int:
    """Number of 1 -> 0 transitions at instants in ``[a, b)``."""
    if z.values.size < 2:
        return 0
    down = z.ticks[1:][(z.values[1:] == 0)]
    return int(np.count_nonzero((down >= a) & (down < b)))


def availability(z: BinarySignal, w: KpiWindow) -> float:
    a, b = _window_ticks(z, w)
    return uptime_ticks(z, a, b) / (b - a)


def crossing_rate(z: BinarySignal, w: KpiWindow) -> float:
    a, b = _window_ticks(z, w)
    return crossings_in(z, a, b) / ((b - a) * z.tick_s)


def mean_downtime(z: BinarySignal, w: KpiWindow) -> float:
    """``(|w| - integral of z) / max(F, 1)`` in seconds."""
    a, b = _window_ticks(z, w)
    down = (b - a) - uptime_ticks(z, a, b)
    return down * z.tick_s / max(crossings_in(z, a, b), 1)


def estimate(z: BinarySignal, w: KpiWindow) -> KpiEstimate:
    return KpiEstimate(availability(z, w), crossing_rate(z, w), mean_downtime(z, w), w)


def long_run_kpis(z: BinarySignal) -> tuple[float, float]:
    """Whole-horizon availability and mean uptime per crossing (seconds)."""
    if z.end <= 0:
        raise SignalError("signal has an empty horizon")
    up = uptime_ticks(z, 0, z.end)
    f = crossings_in(z, 0, z.end)
    return up / z.end, up * z.tick_s / max(f, 1)


def write_trace_csv(signal: BinarySignal, path: str | Path) -> None:
    """Breakpoints only; the horizon end is not part of the format."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s", "value"])
        for t, v in zip(signal.ticks.tolist(), signal.values.tolist()):
            writer.writerow([format_seconds(t, signal.tick_s), v])


def read_trace_csv(path: str | Path, horizon_end_s: float,
                   tick_s: float = DEFAULT_TICK_S) -> BinarySignal:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["time_s", "value"]:
            raise SignalError(f"{path}: expected header time_s,value, got {header}")
        times, values = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise SignalError(f"{path}:{lineno}: expected 2 fields")
            times.append(float(row[0]))
            values.append(int(row[1]))
    return BinarySignal.from_times(times, values, horizon_end_s, tick_s)
