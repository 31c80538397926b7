"""Baseline-policy tests."""

import numpy as np
import pytest
from scipy import stats

from radarspectrum import policies


def test_random_policy_singleton():
    rng = np.random.default_rng(0)
    assert all(policies.random_policy(1, rng) == 0 for _ in range(20))


def test_random_policy_uniform_chi2():
    rng = np.random.default_rng(1)
    m = 4
    draws = [policies.random_policy(m, rng) for _ in range(10_000)]
    counts = np.bincount(draws, minlength=m)
    chi2 = stats.chisquare(counts).pvalue
    assert chi2 > 1e-4


def test_random_policy_validation():
    with pytest.raises(ValueError):
        policies.random_policy(0, np.random.default_rng(0))


def test_myopic_keeps_on_success():
    rng = np.random.default_rng(2)
    st = policies.MyopicState(last_subband=2)
    u, st = policies.myopic_policy(st, 5.0, 11.0, 3, rng)
    assert u == 2 and st.last_subband == 2


def test_myopic_switches_on_failure_uniform():
    rng = np.random.default_rng(3)
    hits = np.zeros(3, dtype=int)
    for _ in range(6000):
        st = policies.MyopicState(last_subband=2)
        u, _ = policies.myopic_policy(st, 20.0, 11.0, 3, rng)
        hits[u] += 1
    # the re-draw includes the current subband: uniform over {0,1,2}
    assert stats.chisquare(hits).pvalue > 1e-4


def test_myopic_threshold_is_strict():
    rng = np.random.default_rng(4)
    # eta exactly eta0 counts as failure
    changed = any(
        policies.myopic_policy(policies.MyopicState(0), 11.0, 11.0, 4, rng)[0] != 0
        for _ in range(50)
    )
    assert changed


def test_myopic_exclude_current():
    rng = np.random.default_rng(5)
    for _ in range(200):
        u, _ = policies.myopic_policy(policies.MyopicState(1), 99.0, 11.0, 3,
                                      rng, exclude_current=True)
        assert u != 1


def test_myopic_m1_always_zero():
    rng = np.random.default_rng(6)
    u, _ = policies.myopic_policy(policies.MyopicState(0), 99.0, 11.0, 1, rng)
    assert u == 0


def test_myopic_constant_under_success_trace():
    rng = np.random.default_rng(7)
    st = policies.MyopicState(3)
    for _ in range(100):
        u, st = policies.myopic_policy(st, 1.0, 11.0, 5, rng)
        assert u == 3
