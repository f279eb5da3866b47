import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ensemble_memory.core import PulseProfile
from ensemble_memory.detection import ChannelModel, detect, detect_many, sample_arrival_times, thin, zeta

PULSE = PulseProfile(0.0, 0.01, np.linspace(1.0, 2.0, 100))


def rng(seed=0):
    return np.random.default_rng(seed)


@given(st.integers(0, 50), st.integers(0, 2**32))
def test_lossless_chain_keeps_every_photon(n, seed):
    d1, d2 = detect(n, ChannelModel(1.0), None, rng(seed))
    assert d1 + d2 == n


def test_zero_efficiency_no_background():
    d1, d2 = detect_many(np.full(1000, 7), ChannelModel(0.0), rng())
    assert not d1.any() and not d2.any()


@pytest.mark.parametrize("k", [1, 2, 5])
def test_background_only_mean(k):
    bg = 0.36 * k
    d1, d2 = detect_many(np.zeros(100_000, np.int64), ChannelModel(0.5, bg), rng(k))
    total = d1 + d2
    assert abs(total.mean() - bg) < 3 * np.sqrt(bg / total.size)


@pytest.mark.parametrize("alpha, bg", [(0.3, 0.0), (0.7, 0.2), (1.0, 0.5)])
def test_split_moments(alpha, bg):
    n_true = rng(9).poisson(2.0, 100_000)
    d1, d2 = detect_many(n_true, ChannelModel(alpha, bg), rng(1))
    total, diff = d1 + d2, d1 - d2
    n = total.size
    expected = alpha * n_true.mean() + bg
    assert abs(total.mean() - expected) < 3 * total.std() / np.sqrt(n)
    assert abs(diff.mean()) < 3 * diff.std() / np.sqrt(n)
    # var(d1 - d2) = E[d1 + d2]; the variance estimate has sd ~ sqrt(2 / n) * var.
    assert abs(diff.var() - total.mean()) < 3 * np.sqrt(2 / n) * total.mean() * 1.5


@given(st.floats(0.0, 0.9), st.floats(0.01, 0.1), st.integers(0, 2**32))
def test_efficiency_coupling_monotone(alpha, step, seed):
    n_true = np.arange(50)
    low = sum(detect_many(n_true, ChannelModel(alpha, 0.3), rng(seed)))
    high = sum(detect_many(n_true, ChannelModel(min(alpha + step, 1.0), 0.3), rng(seed)))
    assert np.all(high >= low)


@given(st.floats(0.001, 0.5), st.integers(0, 2**32))
def test_dead_time_never_adds_counts(dead_time, seed):
    n_true = rng(seed).poisson(3.0, 200)
    free = detect_many(n_true, ChannelModel(0.8, 0.4), rng(seed), PULSE)
    censored = detect_many(n_true, ChannelModel(0.8, 0.4, dead_time), rng(seed), PULSE)
    for a, b in zip(censored, free):
        assert np.all(a <= b)


def test_dead_time_removes_close_pairs():
    # Every photon lands inside a 1 ns pulse: at most one count per detector.
    pulse = PulseProfile(0.0, 0.001, np.ones(1))
    d1, d2 = detect_many(np.full(1000, 10), ChannelModel(1.0, 0.0, 0.05), rng(), pulse)
    assert d1.max() == 1 and d2.max() == 1


def test_dead_time_needs_pulse():
    with pytest.raises(ValueError):
        detect(3, ChannelModel(1.0, 0.0, 0.05), None, rng())
    with pytest.raises(ValueError):
        detect(3, ChannelModel(1.0, 0.0, 0.05), PulseProfile(0.0, 1.0, np.zeros(0)), rng())


def test_arrival_times_follow_pulse():
    t = sample_arrival_times(PULSE, 200_000, rng())
    assert t.min() >= 0 and t.max() <= PULSE.duration
    expected = np.sum(PULSE.times * PULSE.flux) / PULSE.flux.sum()
    assert t.mean() == pytest.approx(expected, abs=3 * t.std() / np.sqrt(t.size))


def test_thin_is_binomial():
    kept = thin(np.full(100_000, 4), 0.25, rng())
    assert kept.mean() == pytest.approx(1.0, abs=3 * np.sqrt(0.75 / 100_000))
    assert kept.var() == pytest.approx(0.75, rel=0.02)


@pytest.mark.parametrize("field, value", [("efficiency", 1.5), ("background", -1), ("dead_time", -1), ("split_ratio", 0.6)])
def test_channel_validation(field, value):
    with pytest.raises(ValueError):
        ChannelModel(**{"efficiency": 0.5, field: value})


@pytest.mark.parametrize(
    "n_bg, alpha, n_s, expected",
    [(0.0, 0.5, 1.0, 0.0), (0.7, 1.0, 1.0, 0.0), (0.3, 0.5, 1.0, 0.3), (0.2, 0.25, 0.5, 1.2)],
)
def test_zeta_values(n_bg, alpha, n_s, expected):
    assert zeta(n_bg, alpha, n_s) == pytest.approx(expected)


@pytest.mark.parametrize("alpha, n_s", [(0.0, 1.0), (0.5, 0.0), (1.5, 1.0)])
def test_zeta_errors(alpha, n_s):
    with pytest.raises(ValueError):
        zeta(0.1, alpha, n_s)
