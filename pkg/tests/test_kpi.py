import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hrlurllc.kpi import (BinarySignal, KpiWindow, SignalError, availability, crossing_rate,
                          estimate, long_run_kpis, mean_downtime, read_trace_csv,
                          survival_filter, to_ticks, write_trace_csv)
from oracles import grid_filter, grid_kpis

MS = 1e-3


def outage(start_ms, end_ms, horizon_ms):
    return BinarySignal.from_times([0, start_ms * MS, end_ms * MS], [1, 0, 1], horizon_ms * MS)


def test_all_ones_stays_up():
    z = survival_filter(BinarySignal.constant(1, 1.0), 5 * MS)
    assert z.values.tolist() == [1]


def test_short_outage_is_masked():
    z = survival_filter(outage(10, 13, 100), 5 * MS)
    assert z.values.tolist() == [1]


def test_long_outage_shows_after_survival_time():
    z = survival_filter(outage(10, 16, 100), 5 * MS)
    assert z.ticks.tolist() == [0, to_ticks(15 * MS), to_ticks(16 * MS)]
    assert z.values.tolist() == [1, 0, 1]
    grid = grid_filter(outage(10, 16, 100).to_grid(), to_ticks(5 * MS))
    assert np.array_equal(z.to_grid(), grid)


def test_outage_from_time_zero_is_not_delayed():
    y = BinarySignal.from_times([0, 3 * MS], [0, 1], 20 * MS)
    z = survival_filter(y, 5 * MS)
    assert np.array_equal(z.to_grid(), grid_filter(y.to_grid(), to_ticks(5 * MS)))
    assert z.values.tolist() == [0, 1]


def test_zero_survival_time_is_identity():
    y = outage(10, 16, 100)
    assert survival_filter(y, 0.0) is y


def test_filter_rejects_negative_survival_time():
    with pytest.raises(SignalError):
        survival_filter(outage(10, 16, 100), -1 * MS)


@pytest.mark.parametrize("ticks,values", [
    ([0, 5, 5], [1, 0, 1]),      # not strictly increasing
    ([0, 7, 3], [1, 0, 1]),      # decreasing
    ([1, 5], [1, 0]),            # does not start at 0
    ([0, 5, 8], [1, 1, 0]),      # redundant breakpoint
    ([0, 5], [1, 2]),            # not binary
])
def test_invalid_breakpoints_rejected(ticks, values):
    with pytest.raises(SignalError):
        BinarySignal(np.array(ticks), np.array(values), 100)


def test_availability_examples():
    w = KpiWindow(0.0, 100 * MS)
    assert availability(BinarySignal.constant(1, 0.1), w) == 1.0
    assert availability(outage(20, 30, 100), w) == pytest.approx(0.9, abs=1e-15)
    z = survival_filter(outage(10, 16, 100), 5 * MS)
    assert availability(z, w) == pytest.approx(0.99, abs=1e-15)


def test_crossing_rate_examples():
    w = KpiWindow(0.0, 100 * MS)
    assert crossing_rate(BinarySignal.constant(1, 0.1), w) == 0.0
    two = BinarySignal.from_times([0, 10 * MS, 20 * MS, 50 * MS, 60 * MS], [1, 0, 1, 0, 1], 0.1)
    assert crossing_rate(two, w) == pytest.approx(20.0, rel=1e-12)
    z = survival_filter(outage(10, 16, 100), 5 * MS)
    assert crossing_rate(z, w) == pytest.approx(10.0, rel=1e-12)


def test_boundary_crossing_counts_in_later_window():
    z = BinarySignal.from_times([0, 50 * MS], [1, 0], 0.1)
    assert crossing_rate(z, KpiWindow(0.0, 50 * MS)) == 0.0
    assert crossing_rate(z, KpiWindow(50 * MS, 100 * MS)) == pytest.approx(20.0)


def test_window_outside_domain_rejected():
    z = BinarySignal.constant(1, 0.1)
    with pytest.raises(SignalError):
        availability(z, KpiWindow(0.0, 0.2))
    with pytest.raises(SignalError):
        KpiWindow(0.1, 0.1)


def test_mean_downtime_counts_ongoing_outage():
    z = BinarySignal.from_times([0, 90 * MS], [1, 0], 0.1)
    assert mean_downtime(z, KpiWindow(0.0, 0.1)) == pytest.approx(10 * MS)
    # outage that started before the window: no crossing inside, guard F >= 1
    assert mean_downtime(z, KpiWindow(95 * MS, 0.1)) == pytest.approx(5 * MS)


def test_long_run_examples():
    assert long_run_kpis(BinarySignal.constant(1, 10.0)) == (1.0, pytest.approx(10.0))
    z = survival_filter(outage(10, 16, 100), 5 * MS)
    avail, uptime = long_run_kpis(z)
    assert avail == pytest.approx(0.99)
    assert uptime == pytest.approx(99 * MS)
    assert long_run_kpis(BinarySignal.constant(0, 10.0)) == (0.0, 0.0)


def test_trace_csv_round_trip(tmp_path):
    y = BinarySignal(np.array([0, 1234, 99999]), np.array([1, 0, 1]), 1_000_000)
    path = tmp_path / "trace.csv"
    write_trace_csv(y, path)
    assert path.read_text().splitlines()[0] == "time_s,value"
    back = read_trace_csv(path, 10.0)
    assert np.array_equal(back.ticks, y.ticks) and np.array_equal(back.values, y.values)


@st.composite
def traces(draw, max_horizon=400):
    horizon = draw(st.integers(1, max_horizon))
    cuts = sorted(draw(st.sets(st.integers(1, max(1, horizon - 1)), max_size=12)))
    cuts = [c for c in cuts if c < horizon]
    first = draw(st.integers(0, 1))
    values = [(first + i) % 2 for i in range(len(cuts) + 1)]
    return BinarySignal(np.array([0] + cuts), np.array(values), horizon)


@settings(max_examples=300, deadline=None)
@given(traces(), st.integers(0, 60), st.data())
def test_matches_grid_oracle(y, k, data):
    z = survival_filter(y, k * y.tick_s)
    zg = grid_filter(y.to_grid(), k)
    assert np.array_equal(z.to_grid(), zg)
    a = data.draw(st.integers(0, y.end - 1))
    b = data.draw(st.integers(a + 1, y.end))
    up, f = grid_kpis(zg, a, b, y.tick_s)
    w = KpiWindow(a * y.tick_s, b * y.tick_s)
    e = estimate(z, w)
    assert e.availability == up / (b - a)
    assert e.crossing_rate == f / ((b - a) * y.tick_s)


@settings(max_examples=200, deadline=None)
@given(traces(), st.integers(0, 40), st.integers(0, 40))
def test_filter_properties(y, k1, k2):
    lo, hi = sorted((k1, k2))
    z_lo = survival_filter(y, lo * y.tick_s)
    z_hi = survival_filter(y, hi * y.tick_s)
    assert np.all(z_lo.to_grid() >= y.to_grid())
    w = KpiWindow(0.0, y.end * y.tick_s)
    assert availability(z_lo, w) <= availability(z_hi, w)
    assert 0.0 <= availability(z_lo, w) <= 1.0
    assert crossing_rate(z_lo, w) >= 0.0


@settings(max_examples=200, deadline=None)
@given(traces(), st.integers(0, 40), st.integers(0, 40))
def test_filters_compose_additively(y, k1, k2):
    twice = survival_filter(survival_filter(y, k1 * y.tick_s), k2 * y.tick_s)
    once = survival_filter(y, (k1 + k2) * y.tick_s)
    assert np.array_equal(twice.to_grid(), once.to_grid())
