from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hrlurllc.config import ScenarioConfig
from hrlurllc.features import (LAYOUT_ID, PER_DEVICE, FeatureError, NormalizationSpec,
                               assemble_high, assemble_low, device_features, feature_names,
                               nearest_rank, raw_device_features, sample_statistics)
from hrlurllc.netsim import DeviceWindow, Simulator, WindowMeasurements

GOLDEN = Path(__file__).parent / "data" / "feature_layout.txt"


def window(samples, start=0, end=200 * 50, **counts):
    s = np.asarray(samples, float)
    return DeviceWindow(0, 0, start, end, 1e-5, n_tti=s.size, sinr_db=s, path_gain_db=s,
                        rlc_buffer=s, z_up=end - start, y_up=end - start, **counts)


@pytest.fixture(scope="module")
def sim_windows():
    sim = Simulator(ScenarioConfig(episode_s=0.5), seed=3)
    return [sim.run_window() for _ in range(5)]


def test_layout_matches_golden_file():
    lines = GOLDEN.read_text().split()
    assert lines[0] == LAYOUT_ID
    assert lines[1:] == feature_names()
    assert PER_DEVICE == 17


def test_constant_samples_give_equal_statistics():
    assert sample_statistics(np.full(40, 7.5)) == [7.5] * 4


def test_nearest_rank_percentiles():
    s = np.arange(1, 101, dtype=float)
    assert nearest_rank(s, 95) == 95
    assert nearest_rank(s, 5) == 5
    assert nearest_rank(s, 50) == 50


def test_zero_traffic_scalars():
    raw = raw_device_features(window(np.zeros(200)))
    assert raw[:4].tolist() == [0.0, 0.0, 0.0, 0.0]


def test_empty_samples_rejected():
    with pytest.raises(FeatureError):
        sample_statistics(np.empty(0))


def test_vector_lengths(sim_windows):
    norm = NormalizationSpec.from_scenario(ScenarioConfig())
    assert len(assemble_low(sim_windows[0][0], norm)) == 85
    assert len(assemble_high(sim_windows, norm, 5)) == 170


def test_high_with_one_window_is_concatenated_low(sim_windows):
    norm = NormalizationSpec.from_scenario(ScenarioConfig())
    w = sim_windows[2]
    high = assemble_high([w], norm, 1).values
    low = np.concatenate([assemble_low(m, norm).values for m in w])
    assert np.array_equal(high, low)


def test_window_count_must_match_c(sim_windows):
    norm = NormalizationSpec.from_scenario(ScenarioConfig())
    with pytest.raises(FeatureError):
        assemble_high(sim_windows[:4], norm, 5)


def test_constant_windows_keep_low_statistics():
    norm = NormalizationSpec.identity()
    parts = [WindowMeasurements(0, [window(np.full(200, 0.25), 10_000 * k, 10_000 * (k + 1))])
             for k in range(5)]
    high = assemble_high([[p] for p in parts], norm, 5).values
    assert np.array_equal(high[5:], assemble_low(parts[0], norm).values[5:])


def test_union_mean_is_weighted_mean_of_window_means(sim_windows):
    for j in range(5):
        parts = [w[0].devices[j] for w in sim_windows]
        merged = DeviceWindow.merge(parts)
        means = [raw_device_features(p)[5] for p in parts]
        weights = [p.sinr_db.size for p in parts]
        assert raw_device_features(merged)[5] == pytest.approx(np.average(means, weights=weights),
                                                               rel=1e-12)


def test_union_statistics_are_not_mean_of_statistics():
    a = window(np.full(200, 0.0), 0, 10_000)
    b = window(np.r_[np.full(190, 10.0), np.full(10, 40.0)], 10_000, 20_000)
    pooled = raw_device_features(DeviceWindow.merge([a, b]))
    assert pooled[7] == 10.0  # p95 of the union
    assert pooled[7] != (raw_device_features(a)[7] + raw_device_features(b)[7]) / 2


def test_normalised_entries_in_unit_box(sim_windows):
    norm = NormalizationSpec.from_scenario(ScenarioConfig())
    v = assemble_high(sim_windows, norm, 5).values
    assert np.all(np.isfinite(v)) and np.all(np.abs(v) <= 1.0)


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=60), st.randoms(use_true_random=False))
def test_percentiles_are_permutation_invariant_and_bounded(xs, rnd):
    s = np.array(xs)
    shuffled = s.copy()
    rnd.shuffle(shuffled)
    stats = sample_statistics(s)
    assert stats[1:] == sample_statistics(shuffled)[1:]
    assert all(s.min() <= v <= s.max() for v in stats[1:])


def test_device_features_scale_affinely():
    norm = NormalizationSpec.from_scenario(ScenarioConfig())
    m = WindowMeasurements(0, [window(np.full(100, 15.0))])
    v = device_features(m, 0, norm).values
    assert v[5] == pytest.approx(2 * (15 + 10) / 50 - 1)
