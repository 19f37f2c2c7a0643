from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arrivalgame.dynamics import MomentSummary
from arrivalgame.estimator import (ThetaEstimator, asymptotic_variance, estimate_support,
                                   farthest_partner, fixed_set_estimate, mean_estimator,
                                   pair_estimate, pair_estimate_early_birds, pairing_weights)
from arrivalgame.exceptions import NoIncreaseObserved
from arrivalgame.simulator import ObservationSet, SamplingSchedule


def _obs(times, rows):
    return ObservationSet(SamplingSchedule(np.asarray(times, dtype=float)), np.asarray(rows))


def test_support_from_single_day():
    obs = _obs(range(6), [[0, 0, 1, 2, 1, 0]])
    sup = estimate_support(obs)
    assert (sup.a_hat_index, sup.b_hat_index) == (2, 2)


def test_support_ignores_batch_at_opening():
    obs = _obs(range(5), [[3, 2, 2, 1, 0]])
    with pytest.raises(NoIncreaseObserved):
        estimate_support(obs)
    # with early birds a rise before opening counts
    obs = _obs([-2, -1, 0, 1, 2], [[0, 1, 1, 1, 0]])
    assert estimate_support(obs, "early_birds").a_hat_index == 1


def test_support_grid_truth():
    obs = _obs(range(6), [[0, 0, 1, 2, 1, 0]])
    sup = estimate_support(obs, truth=(1.5, 3.9))
    assert (sup.a_tilde_index, sup.b_tilde_index) == (2, 3)


def test_farthest_partner():
    assert farthest_partner(0.0, [0.0, 2.0, 5.0]) == 5.0
    assert farthest_partner(5.0, [0.0, 2.0, 5.0]) == 0.0
    # equidistant: the earlier time wins
    assert farthest_partner(7.0, [2.0, 7.0, 12.0]) == 2.0
    with pytest.raises(ValueError):
        farthest_partner(1.0, [1.0])


def test_pair_estimates():
    assert pair_estimate(2.0, 12.0, 1.0, 0.0, 1.0) == pytest.approx(0.1)
    # half queue at the opening: q(0) = 4 stands for 2
    assert pair_estimate(0.0, 10.0, 4.0, 1.0, 1.0) == pytest.approx(0.1)
    assert pair_estimate(10.0, 0.0, 1.0, 4.0, 1.0) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        pair_estimate(1.0, 1.0, 0.0, 0.0, 1.0)


def test_pairing_weights_example():
    g, k, partner = pairing_weights([2.0, 7.0, 12.0], 1.0)
    np.testing.assert_allclose(g, [2 / 15, -1 / 15, -1 / 15])
    np.testing.assert_allclose(k, [-30, 15, 30])
    np.testing.assert_array_equal(partner, [2, 0, 0])


times_strategy = st.lists(st.floats(0.01, 100.0, allow_nan=False), min_size=2, max_size=40, unique=True)


@settings(max_examples=1000, deadline=None)
@given(times_strategy, st.floats(0.1, 10.0))
def test_weight_identities(times, mu):
    times = np.sort(np.round(times, 6))
    if np.unique(times).size < 2:
        return
    times = np.unique(times)
    g, _, _ = pairing_weights(times, mu)
    scale = np.abs(g).sum()
    assert abs(g.sum()) <= 1e-9 * scale
    assert mu * float(g @ times) == pytest.approx(-1.0, rel=1e-9)


@settings(max_examples=200, deadline=None)
@given(times_strategy, st.floats(0.0, 1.0), st.floats(-5.0, 50.0), st.floats(0.1, 5.0))
def test_fixed_set_recovers_theta(times, theta, intercept, mu):
    times = np.unique(np.round(times, 6))
    if times.size < 2:
        return
    q = intercept - theta * mu * times
    assert fixed_set_estimate(q, times, mu) == pytest.approx(theta, abs=1e-9 * (1 + abs(intercept)))


def test_exact_recovery_with_opening_time():
    # q(0) = 10, interior means 5 - 0.5 t at t = 2..6; days split the means into integers
    rows = [[10, 0, 4, 4, 3, 3, 2, 9, 0],
            [10, 0, 4, 3, 3, 2, 2, 0, 0]]
    obs = _obs(range(9), rows)
    res = mean_estimator(obs, 1.0)
    assert res.success
    np.testing.assert_array_equal(res.estimation_times, [0, 2, 3, 4, 5, 6])
    assert res.theta_hat == pytest.approx(0.5, abs=1e-12)
    assert res.pairing[6.0] == 0.0
    assert mean_estimator(obs, 1.0, include_zero=False).theta_hat == pytest.approx(0.5, abs=1e-12)
    np.testing.assert_array_equal(res.weight_times, [2, 3, 4, 5, 6])
    assert float(res.g @ np.array([4, 3.5, 3, 2.5, 2])) == pytest.approx(0.5)


def test_exact_recovery_early_birds():
    # theta = 0.5, mu = 1, pre-opening width 6: slope 0.5 before zero, -0.5 after
    rows = [[0, 1, 2, 3, 3, 2, 1, 5],
            [0, 0, 1, 2, 2, 1, 0, 0]]
    obs = _obs([-7, -5, -3, -1, 1, 3, 5, 7], rows)
    res = mean_estimator(obs, 1.0, variant="early_birds")
    assert res.success
    np.testing.assert_array_equal(res.estimation_times, [-5, -3, -1, 1, 3, 5])
    assert res.theta_hat == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("s,t", [(-5.0, -1.0), (-3.0, 4.0), (1.0, 5.0), (5.0, -3.0)])
def test_early_bird_pair_branches(s, t):
    theta, mu, w = 0.3, 2.0, 6.0
    q = lambda x: (1 - theta) * mu * (x + w) if x <= 0 else (1 - theta) * mu * w - theta * mu * x
    assert pair_estimate_early_birds(s, t, q(s), q(t), mu) == pytest.approx(theta, abs=1e-12)


def test_estimation_failures():
    res = mean_estimator(_obs(range(4), [[3, 2, 1, 0]]), 1.0)
    assert not res.success and np.isnan(res.theta_hat)
    # a single rise makes a_hat = b_hat + 1
    res = mean_estimator(_obs(range(5), [[3, 2, 1, 2, 2]]), 1.0)
    assert not res.success and "empty" in res.reason


def test_asymptotic_variance_examples():
    assert asymptotic_variance([1.0, -1.0], np.array([[2.0, 1.0], [1.0, 2.0]])) == pytest.approx(2.0)
    assert asymptotic_variance([3.0, 4.0], np.eye(2)) == pytest.approx(25.0)
    rng = np.random.default_rng(0)
    a = rng.normal(size=(6, 6))
    sigma = a @ a.T
    g = rng.normal(size=6)
    assert asymptotic_variance(g, sigma) == pytest.approx(float(g @ sigma @ g))
    with pytest.raises(ValueError):
        asymptotic_variance([1.0], np.eye(2))


def test_theta_estimator_api():
    rows = [[10, 0, 4, 4, 3, 3, 2, 9, 0],
            [10, 0, 4, 3, 3, 2, 2, 0, 0]]
    est = ThetaEstimator(times=list(range(9)), mu=1.0)
    assert est.get_params()["mu"] == 1.0
    est.fit(np.array(rows))
    assert est.theta_ == pytest.approx(0.5)
    assert est.n_days_ == 2
    assert est.confidence_interval() is None
    times = np.arange(2.0, 7.0)
    ms = MomentSummary(times, np.zeros(5), np.ones(5), np.eye(5))
    est.fit(np.array(rows), moments=ms)
    assert est.asymptotic_variance_ == pytest.approx(float(est.g_ @ est.g_))
    lo, hi = est.confidence_interval()
    assert lo < 0.5 < hi
    with pytest.raises(ValueError):
        ThetaEstimator(times=list(range(9))).fit(-np.ones((2, 9)))
