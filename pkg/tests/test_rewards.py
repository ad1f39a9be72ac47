import math

import pytest
from hypothesis import given, strategies as st

from hrlurllc.rewards import RewardConfig, RewardError, reward, reward_avg, reward_high, reward_risk

AVG = RewardConfig(0.5, 2.0, "average")
RISK = RewardConfig(0.5, 2.0, "risk_sensitive")

# crossing rates stay below 1/T_s (200 per second at the default survival time)
kpi = st.tuples(st.floats(0.0, 1.0), st.floats(0.0, 200.0))
kpis = st.lists(kpi, min_size=1, max_size=10)


def direct_avg(pairs, w):
    return sum(w * a - (1 - w) * p for a, p in pairs) / (w * len(pairs))


def direct_risk(pairs, w, eta):
    r = w * min(a for a, _ in pairs) - (1 - w) * max(p for _, p in pairs)
    return math.exp(eta / w * (r - w))


@pytest.mark.parametrize("w", [0.1, 0.5, 0.9])
def test_average_is_one_at_perfect_service(w):
    assert reward_avg([(1.0, 0.0)] * 3, RewardConfig(w, 2.0)) == 1.0


def test_average_example():
    assert reward_avg([(1.0, 0.0), (0.9, 10.0)], AVG) == pytest.approx(-4.05, abs=1e-12)


def test_average_all_down_single_device():
    assert reward_avg([(0.0, 0.0)], AVG) == 0.0


def test_risk_is_one_at_perfect_service():
    assert reward_risk([(1.0, 0.0), (1.0, 0.0)], RISK) == 1.0


def test_risk_example():
    pairs = [(0.9, 0.0), (1.0, 0.2)]
    assert reward_risk(pairs, RISK) == pytest.approx(math.exp(-0.6), abs=1e-12)
    assert reward_risk(pairs, RISK) == pytest.approx(0.5488, abs=1e-4)


def test_high_average_of_equal_gnbs():
    g = [(0.95, 1.0), (1.0, 0.0)]
    assert reward_high([g, g], AVG) == pytest.approx(reward_avg(g, AVG), abs=1e-15)


def test_high_risk_uses_global_extremes():
    g0 = [(0.8, 0.0), (1.0, 0.0)]
    g1 = [(1.0, 0.0), (1.0, 5.0)]
    mean_of_gnbs = (reward_risk(g0, RISK) + reward_risk(g1, RISK)) / 2
    expected = direct_risk(g0 + g1, 0.5, 2.0)
    assert reward_high([g0, g1], RISK) == pytest.approx(expected, abs=1e-15)
    assert reward_high([g0, g1], RISK) != pytest.approx(mean_of_gnbs)


def test_mode_dispatch():
    pairs = [(0.9, 0.5)]
    assert reward(pairs, AVG) == reward_avg(pairs, AVG)
    assert reward(pairs, RISK) == reward_risk(pairs, RISK)


@pytest.mark.parametrize("bad", [dict(omega=0.0), dict(omega=1.0), dict(eta=0.0),
                                 dict(mode="mean")])
def test_config_validation(bad):
    with pytest.raises(RewardError):
        RewardConfig(**{"omega": 0.5, "eta": 2.0, "mode": "average", **bad})


def test_empty_device_list_rejected():
    with pytest.raises(RewardError):
        reward_avg([], AVG)


@given(kpis, st.floats(0.05, 0.95), st.floats(0.1, 5.0))
def test_matches_direct_evaluation(pairs, w, eta):
    cfg = RewardConfig(w, eta)
    assert reward_avg(pairs, cfg) == pytest.approx(direct_avg(pairs, w), rel=1e-12, abs=1e-12)
    assert reward_risk(pairs, cfg) == pytest.approx(direct_risk(pairs, w, eta), rel=1e-12)


@given(kpis)
def test_bounds(pairs):
    assert reward_avg(pairs, AVG) <= 1.0
    assert 0.0 < reward_risk(pairs, RISK) <= 1.0


@given(kpis, st.integers(0, 9), st.floats(0.0, 1.0), st.floats(0.0, 50.0))
def test_monotone_in_each_device(pairs, i, da, dpsi):
    i %= len(pairs)
    a, p = pairs[i]
    better = list(pairs)
    better[i] = (min(1.0, a + da), max(0.0, p - dpsi))
    for f, cfg in ((reward_avg, AVG), (reward_risk, RISK)):
        assert f(better, cfg) >= f(pairs, cfg) - 1e-12


@given(kpis, st.randoms(use_true_random=False))
def test_permutation_invariant(pairs, rnd):
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    assert reward_avg(shuffled, AVG) == pytest.approx(reward_avg(pairs, AVG), rel=1e-12, abs=1e-12)
    assert reward_risk(shuffled, RISK) == reward_risk(pairs, RISK)
