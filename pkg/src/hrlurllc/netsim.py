"""Discrete-event downlink simulator with per-TTI HARQ and delay-bound drops.

Time is kept in integer ticks (see :mod:`hrlurllc.kpi`).  Each device has one
HARQ process: the head-of-line packet is (re)transmitted every TTI it is
eligible, decoding succeeds with probability ``1 - bler``, and a packet is
dropped once it used its allowed transmissions or can no longer arrive within
the delay bound.  ``Y`` goes to 0 at every drop and back to 1 at every timely
delivery.
"""
from __future__ import annotations

import bisect
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import channel, kpi
from .config import ScenarioConfig
from .kpi import BinarySignal, KpiEstimate, KpiWindow


class ActionError(ValueError):
    pass


@dataclass
class DeviceWindow:
    """Raw per-device measurements over one or more merged windows."""

    gnb: int
    device: int
    start: int
    end: int
    tick_s: float
    n_tti: int = 0
    delivered: int = 0
    dropped: int = 0
    delay_ticks: int = 0
    tx_resolved: int = 0
    rb_used: int = 0
    y_up: int = 0
    y_crossings: int = 0
    z_up: int = 0
    z_crossings: int = 0
    sinr_db: np.ndarray = field(default_factory=lambda: np.empty(0))
    path_gain_db: np.ndarray = field(default_factory=lambda: np.empty(0))
    rlc_buffer: np.ndarray = field(default_factory=lambda: np.empty(0))
    y_ticks: tuple = ()
    y_values: tuple = ()

    @property
    def span(self) -> int:
        return self.end - self.start

    @property
    def window(self) -> KpiWindow:
        return KpiWindow(self.start * self.tick_s, self.end * self.tick_s)

    @property
    def packet_loss_rate(self) -> float:
        resolved = self.delivered + self.dropped
        return self.dropped / resolved if resolved else 0.0

    @property
    def mean_downtime_s(self) -> float:
        """Network-layer (Y) downtime per outage."""
        return (self.span - self.y_up) * self.tick_s / max(self.y_crossings, 1)

    @property
    def mean_delay_s(self) -> float:
        return self.delay_ticks * self.tick_s / self.delivered if self.delivered else 0.0

    @property
    def mean_harq_tx(self) -> float:
        resolved = self.delivered + self.dropped
        return self.tx_resolved / resolved if resolved else 0.0

    @property
    def mean_rb_used(self) -> float:
        return self.rb_used / self.n_tti if self.n_tti else 0.0

    @property
    def availability(self) -> float:
        return self.z_up / self.span

    @property
    def crossing_rate(self) -> float:
        return self.z_crossings / (self.span * self.tick_s)

    def kpis(self) -> KpiEstimate:
        downtime = (self.span - self.z_up) * self.tick_s / max(self.z_crossings, 1)
        return KpiEstimate(self.availability, self.crossing_rate, downtime, self.window)

    @staticmethod
    def merge(parts: Sequence["DeviceWindow"]) -> "DeviceWindow":
        """Concatenate consecutive windows of one device."""
        if not parts:
            raise ValueError("nothing to merge")
        first, last = parts[0], parts[-1]
        for a, b in zip(parts, parts[1:]):
            if a.end != b.start or a.device != b.device:
                raise ValueError("windows must be consecutive and belong to one device")
        out = DeviceWindow(first.gnb, first.device, first.start, last.end, first.tick_s)
        for name in ("n_tti", "delivered", "dropped", "delay_ticks", "tx_resolved", "rb_used",
                     "y_up", "y_crossings", "z_up", "z_crossings"):
            setattr(out, name, sum(getattr(p, name) for p in parts))
        for name in ("sinr_db", "path_gain_db", "rlc_buffer"):
            setattr(out, name, np.concatenate([getattr(p, name) for p in parts]))
        out.y_ticks = sum((p.y_ticks for p in parts), ())
        out.y_values = sum((p.y_values for p in parts), ())
        return out


@dataclass
class WindowMeasurements:
    gnb: int
    devices: list[DeviceWindow]

    def kpis(self) -> list[KpiEstimate]:
        return [d.kpis() for d in self.devices]

    @staticmethod
    def merge(windows: Sequence["WindowMeasurements"]) -> "WindowMeasurements":
        gnb = windows[0].gnb
        n = len(windows[0].devices)
        return WindowMeasurements(
            gnb, [DeviceWindow.merge([w.devices[j] for w in windows]) for j in range(n)])


class _Packet:
    __slots__ = ("pid", "arrival", "attempts", "max_tx", "eligible")

    def __init__(self, pid: int, arrival: int):
        self.pid = pid
        self.arrival = arrival
        self.attempts = 0
        self.max_tx = 0
        self.eligible = 0


class Simulator:
    """One downlink scenario; single-threaded, owns all of its state."""

    def __init__(self, cfg: ScenarioConfig, seed: int | None = None,
                 gain_field: channel.PathGainField | None = None,
                 bler_fn: Callable[[float, int], float] | None = None):
        self.cfg = cfg.validate()
        self.radio = channel.RadioConfig.from_scenario(cfg)
        self.field = gain_field if gain_field is not None else channel.field_for(cfg)
        if self.field.shape != (cfg.n_gnbs, cfg.n_devices):
            raise channel.DimensionMismatchError(
                f"gain field is {self.field.shape}, scenario needs {(cfg.n_gnbs, cfg.n_devices)}")
        self._custom_bler = bler_fn is not None
        self.bler_fn = bler_fn or (lambda s, k: channel.bler(s, k, self.radio))
        self.seed = cfg.rng_seed if seed is None else seed

        self.tick_s = cfg.tick_s
        self.tti = cfg.ticks(cfg.tti_s)
        self.period = cfg.ticks(cfg.traffic_period_s)
        self.bound = cfg.ticks(cfg.delay_bound_s)
        self.survival = cfg.ticks(cfg.survival_time_s)
        self.feedback = cfg.harq_feedback_delay_tti * self.tti
        self.gain_period = cfg.ticks(cfg.gain_update_period_s)
        self.horizon = cfg.ticks(cfg.episode_s)
        self.step_ticks = cfg.ticks(cfg.low_step_s)
        self.U = cfg.n_devices
        self.B = cfg.n_gnbs
        self.serving = cfg.device_gnb()
        self.reset(self.seed)

    # -- lifecycle ---------------------------------------------------------
    def reset(self, seed: int | None = None) -> None:
        if seed is not None:
            self.seed = seed
        self.rng = np.random.default_rng([self.seed, 0])
        self.channel_rng = np.random.default_rng([self.seed, 1])
        self._draws = np.empty(0)
        self._draw_pos = 0
        self.now = 0
        self._field = self.field
        self._gains_src = None
        self._gains_k = 0
        self._gains_cur = self._field.gains[0]
        self._gains_rows: list[list[float]] = []
        self.power = np.full(self.U, self.cfg.baseline_power_w)
        self.max_tx = [self.cfg.baseline_max_tx] * self.U
        self.queue: list[deque] = [deque() for _ in range(self.U)]
        self.inflight: list[_Packet | None] = [None] * self.U
        self.next_arrival = [self.period] * self.U
        self.next_pid = 0
        self.arrived = [0] * self.U
        self.delivered = [0] * self.U
        self.dropped = [0] * self.U
        self.y_ticks: list[list[int]] = [[0] for _ in range(self.U)]
        self.y_vals: list[list[int]] = [[1] for _ in range(self.U)]
        self._rr = [0] * self.B
        self._window = None
        self._power_list = self.power.tolist()

    # -- actions -----------------------------------------------------------
    def apply_low_action(self, gnb: int, retx_vector: Sequence[int]) -> None:
        devices = self.cfg.gnb_devices(gnb)
        if len(retx_vector) != len(devices):
            raise ActionError(f"gNB {gnb} needs {len(devices)} retransmission values")
        levels = set(self.cfg.retx_levels)
        for v in retx_vector:
            if v not in levels:
                raise ActionError(f"max transmissions {v} not in {sorted(levels)}")
        for u, v in zip(devices, retx_vector):
            self.max_tx[u] = int(v)

    def apply_high_action(self, power_vector: Sequence[float]) -> None:
        if len(power_vector) != self.U:
            raise ActionError(f"power vector needs {self.U} entries")
        levels = set(self.cfg.power_levels_w)
        for v in power_vector:
            if v not in levels:
                raise ActionError(f"power {v} W not in {sorted(levels)}")
        self.power = np.array(power_vector, dtype=float)
        self._power_list = self.power.tolist()

    # -- Y bookkeeping -----------------------------------------------------
    def _set_y(self, u: int, tick: int, value: int) -> None:
        ticks, vals = self.y_ticks[u], self.y_vals[u]
        if vals[-1] == value:
            return
        if ticks[-1] == tick:
            if len(ticks) == 1:
                vals[0] = value
            else:
                ticks.pop()
                vals.pop()
            return
        ticks.append(tick)
        vals.append(value)

    def y_signal(self, u: int, end: int | None = None) -> BinarySignal:
        end = self.now if end is None else end
        ticks, vals = self.y_ticks[u], self.y_vals[u]
        n = bisect.bisect_right(ticks, end)
        return BinarySignal(np.array(ticks[:n]), np.array(vals[:n]), end, self.tick_s)

    def z_signal(self, u: int, end: int | None = None) -> BinarySignal:
        return kpi.survival_filter(self.y_signal(u, end), self.cfg.survival_time_s)

    # -- random numbers ----------------------------------------------------
    def _uniform(self) -> float:
        if self._draw_pos >= self._draws.size:
            self._draws = self.rng.random(4096)
            self._draw_pos = 0
        x = self._draws[self._draw_pos]
        self._draw_pos += 1
        return float(x)

    # -- window plumbing ---------------------------------------------------
    def _begin_window(self, n_tti: int) -> None:
        U, B = self.U, self.B
        w = {
            "start": self.now,
            "n_tti": n_tti,
            "i": 0,
            "active": np.zeros((n_tti, B), bool),
            "pbar": np.zeros((n_tti, B)),
            "buffer": np.zeros((n_tti, U)),
            "gains": np.empty((n_tti, B, U)),
            "power": self.power.copy(),
            "delivered": [0] * U,
            "dropped": [0] * U,
            "delay": [0] * U,
            "tx_resolved": [0] * U,
            "rb": [0] * U,
        }
        self._window = w

    def _gains_for_tti(self, t: int) -> np.ndarray:
        """Gain matrix in force at tick ``t``; the same object while unchanged."""
        f = self._field
        if f.mode == "gauss_markov":
            if t > 0 and t % self.gain_period == 0:
                dt = self.gain_period * self.tick_s
                self._field = channel.evolve(f, self.channel_rng, dt)
                self._gains_cur = self._field.gains[0]
        elif f.n_snapshots > 1:
            k = (t // self.gain_period) % f.n_snapshots
            if k != self._gains_k:
                self._gains_k = k
                self._gains_cur = f.gains[k]
        return self._gains_cur

    def _buffer_lengths(self) -> list[int]:
        return [len(q) + (1 if f is not None else 0) for q, f in zip(self.queue, self.inflight)]

    # -- the TTI -----------------------------------------------------------
    def step_tti(self) -> None:
        """Advance one TTI."""
        if self._window is None or self._window["i"] >= self._window["n_tti"]:
            self._begin_window(self.cfg.ttis_per_step)
        self._tti()

    def _tti(self) -> None:
        w = self._window
        i = w["i"]
        t = self.now
        te = t + self.tti
        gains = self._gains_for_tti(t)
        w["gains"][i] = gains
        if gains is not self._gains_src:
            self._gains_src = gains
            self._gains_rows = gains.tolist()
        g = self._gains_rows
        power = self._power_list

        for u in range(self.U):
            if self.next_arrival[u] == t:
                self.queue[u].append(_Packet(self.next_pid, t))
                self.next_pid += 1
                self.arrived[u] += 1
                self.next_arrival[u] += self.period
            q = self.queue[u]
            while q and te - q[0].arrival > self.bound:
                q.popleft()
                self._drop(u, t, 0)

        w["buffer"][i] = self._buffer_lengths()

        scheduled: list[list[int]] = [[] for _ in range(self.B)]
        for u in range(self.U):
            pkt = self.inflight[u]
            if pkt is None and self.queue[u]:
                pkt = self.queue[u].popleft()
                pkt.max_tx = self.max_tx[u]
                pkt.eligible = t
                self.inflight[u] = pkt
            if pkt is not None and pkt.eligible <= t:
                scheduled[self.serving[u]].append(u)
        cap = self.cfg.capacity_per_tti
        if cap:
            for b in range(self.B):
                cands = scheduled[b]
                if len(cands) > cap:
                    start = self._rr[b] % len(cands)
                    scheduled[b] = sorted((cands[start:] + cands[:start])[:cap])
                    self._rr[b] += cap

        radiated = []
        for b in range(self.B):
            if scheduled[b]:
                p_mean = sum(power[u] for u in scheduled[b]) / len(scheduled[b])
                radiated.append((b, p_mean))
                w["active"][i, b] = True
                w["pbar"][i, b] = p_mean

        noise = self.radio.noise_power
        radio = self.radio
        for b in range(self.B):
            for u in scheduled[b]:
                interference = 0.0
                for b2, p2 in radiated:
                    if b2 != b:
                        interference += p2 * g[b2][u]
                lin = power[u] * g[b][u] / (interference + noise)
                sinr_db = 10.0 * math.log10(lin) if lin > 0 else -math.inf
                pkt = self.inflight[u]
                pkt.attempts += 1
                w["rb"][u] += 1
                if self._custom_bler:
                    err = self.bler_fn(sinr_db, pkt.attempts)
                else:
                    x = radio.bler_slope * (sinr_db + (pkt.attempts - 1) * radio.harq_combining_gain_db
                                            - radio.bler_midpoint_db)
                    err = 0.0 if x > 700 else 1.0 if x < -700 else 1.0 / (1.0 + math.exp(x))
                if self._uniform() >= err:
                    self.inflight[u] = None
                    self.delivered[u] += 1
                    w["delivered"][u] += 1
                    w["delay"][u] += te - pkt.arrival
                    w["tx_resolved"][u] += pkt.attempts
                    self._set_y(u, te, 1)
                elif (pkt.attempts >= pkt.max_tx
                      or te + self.feedback + self.tti - pkt.arrival > self.bound):
                    self.inflight[u] = None
                    self._drop(u, te, pkt.attempts)
                else:
                    pkt.eligible = te + self.feedback

        self.now = te
        w["i"] = i + 1

    def _drop(self, u: int, at: int, attempts: int) -> None:
        self.dropped[u] += 1
        w = self._window
        w["dropped"][u] += 1
        w["tx_resolved"][u] += attempts
        self._set_y(u, at, 0)

    def _next_busy_tick(self) -> int:
        """Earliest tick at which any device has something to do."""
        t = self.now
        nxt = math.inf
        for u in range(self.U):
            pkt = self.inflight[u]
            if pkt is not None:
                cand = max(pkt.eligible, t)
            elif self.queue[u]:
                cand = t
            else:
                cand = self.next_arrival[u]
            if cand < nxt:
                nxt = cand
                if nxt <= t:
                    return t
        return nxt

    def _idle_until(self, target: int) -> None:
        """Skip TTIs in which nothing can happen, up to ``target``."""
        w = self._window
        buf = self._buffer_lengths()
        while self.now < target:
            i = w["i"]
            w["gains"][i] = self._gains_for_tti(self.now)
            w["buffer"][i] = buf
            self.now += self.tti
            w["i"] = i + 1

    def run_window(self, actions_in_force: dict | None = None) -> list[WindowMeasurements]:
        """Advance one low-level step and return per-gNB measurements."""
        if actions_in_force:
            if "power" in actions_in_force:
                self.apply_high_action(actions_in_force["power"])
            for b, vec in actions_in_force.get("retx", {}).items():
                self.apply_low_action(b, vec)
        n_tti = self.cfg.ttis_per_step
        self._begin_window(n_tti)
        end = self.now + n_tti * self.tti
        while self.now < end:
            busy = self._next_busy_tick()
            if busy > self.now:
                target = min(end, self.tti * math.ceil(busy / self.tti))
                self._idle_until(target)
                continue
            self._tti()
        return self._end_window()

    def _end_window(self) -> list[WindowMeasurements]:
        w = self._window
        n = w["i"]
        start, end = w["start"], self.now
        gains = w["gains"][:n]
        active = w["active"][:n]
        pbar = w["pbar"][:n]
        serving = np.array(self.serving)
        cols = np.arange(self.U)
        # per-TTI SINR each device would see if scheduled
        radiated = active * pbar  # (n, B)
        interf_all = np.einsum("tb,tbu->tu", radiated, gains)
        own = radiated[:, serving] * gains[:, serving, cols]
        interference = np.maximum(interf_all - own, 0.0)
        signal = w["power"][None, :] * gains[:, serving, cols]
        with np.errstate(divide="ignore"):
            sinr_db = 10.0 * np.log10(signal / (interference + self.radio.noise_power))
        gain_db = 10.0 * np.log10(gains[:, serving, cols])

        out = []
        for b in range(self.B):
            devs = []
            for u in self.cfg.gnb_devices(b):
                y_up, y_cross, z_up, z_cross, seg = self._signal_stats(u, start, end)
                devs.append(DeviceWindow(
                    gnb=b, device=u, start=start, end=end, tick_s=self.tick_s, n_tti=n,
                    delivered=w["delivered"][u], dropped=w["dropped"][u],
                    delay_ticks=w["delay"][u], tx_resolved=w["tx_resolved"][u],
                    rb_used=w["rb"][u], y_up=y_up, y_crossings=y_cross,
                    z_up=z_up, z_crossings=z_cross,
                    sinr_db=sinr_db[:, u].copy(), path_gain_db=gain_db[:, u].copy(),
                    rlc_buffer=w["buffer"][:n, u].copy(),
                    y_ticks=seg[0], y_values=seg[1]))
            out.append(WindowMeasurements(b, devs))
        self._window = None
        return out

    def _signal_stats(self, u: int, a: int, b: int):
        """Y and Z integrals/crossings on ``[a, b)`` without refiltering the
        whole history: the trace is cut at the last up-edge at or before
        ``a - T_s``, which leaves ``Z`` on ``[a, b)`` unchanged."""
        ticks, vals = self.y_ticks[u], self.y_vals[u]
        hi = bisect.bisect_right(ticks, b)
        j = bisect.bisect_right(ticks, a - self.survival) - 1
        if j < 0:
            j = 0
        if vals[j] == 0 and j > 0:
            j -= 1
        base = ticks[j] if vals[j] == 1 else 0
        if base != 0:
            local_t = np.array(ticks[j:hi]) - base
            local_v = np.array(vals[j:hi])
        else:
            j = 0
            local_t = np.array(ticks[:hi])
            local_v = np.array(vals[:hi])
        y = BinarySignal(local_t, local_v, b - base, self.tick_s)
        z = kpi.survival_filter(y, self.cfg.survival_time_s)
        la, lb = a - base, b - base
        k0 = bisect.bisect_right(ticks, a) - 1
        seg = ((a,) + tuple(ticks[k0 + 1:hi]), (vals[k0],) + tuple(vals[k0 + 1:hi]))
        if seg[0][-1] == b and len(seg[0]) > 1:
            seg = (seg[0][:-1], seg[1][:-1])
        return (kpi.uptime_ticks(y, la, lb), kpi.crossings_in(y, la, lb),
                kpi.uptime_ticks(z, la, lb), kpi.crossings_in(z, la, lb), seg)

    # -- episode-level views -------------------------------------------------
    def conservation(self, u: int) -> tuple[int, int]:
        in_queue = len(self.queue[u])
        in_flight = 1 if self.inflight[u] is not None else 0
        return self.delivered[u] + self.dropped[u] + in_queue + in_flight, self.arrived[u]

    def episode_kpis(self) -> list[tuple[float, float]]:
        """(availability, crossing rate) per device over ``[0, now)``."""
        out = []
        w = KpiWindow(0.0, self.now * self.tick_s)
        for u in range(self.U):
            z = self.z_signal(u)
            out.append((kpi.availability(z, w), kpi.crossing_rate(z, w)))
        return out

    @property
    def finished(self) -> bool:
        return self.now >= self.horizon
