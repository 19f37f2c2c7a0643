from __future__ import annotations

import csv

import numpy as np
import pytest

from arrivalgame.dynamics import (QueueStateDistribution, covariance, covariance_matrix, moments,
                                  poisson_state, propagate, step, write_series_csv)
from arrivalgame.exceptions import StepTooCoarse
from arrivalgame.model import ModelParams
from arrivalgame.simulator import SamplingSchedule, simulate


def _params(K=4, delta=1e-3, mu=1.0):
    return ModelParams(lam=1.0, mu=mu, alpha=1.0, beta=1.0, delta=delta, truncation=K)


def _transition(rate, mu, delta, K):
    # I + delta * generator, with arrivals blocked in state K
    A = np.eye(K + 1)
    for k in range(K + 1):
        if k < K:
            A[k, k + 1] += delta * rate
            A[k, k] -= delta * rate
        if k > 0:
            A[k, k - 1] += delta * mu
            A[k, k] -= delta * mu
    return A


def test_empty_queue_without_arrivals_stays_empty():
    s = QueueStateDistribution(0.0, np.eye(5)[0])
    out = step(s, 0.0, _params())
    np.testing.assert_array_equal(out.probs, np.eye(5)[0])
    assert out.time == pytest.approx(1e-3)


def test_one_customer_serves():
    s = QueueStateDistribution(0.0, np.eye(5)[1])
    out = step(s, 0.0, _params())
    np.testing.assert_allclose(out.probs[:2], [0.001, 0.999], atol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_step_matches_transition_matrix(seed):
    rng = np.random.default_rng(seed)
    K = 6
    p = rng.dirichlet(np.ones(K + 1))
    rate = float(rng.uniform(0, 50))
    params = _params(K=K, delta=0.01, mu=3.0)
    out = step(QueueStateDistribution(0.5, p), rate, params)
    np.testing.assert_allclose(out.probs, p @ _transition(rate, 3.0, 0.01, K), atol=1e-13)


def test_coarse_step_rejected():
    with pytest.raises(StepTooCoarse):
        step(QueueStateDistribution(0.0, np.eye(5)[0]), 999.5, _params(delta=1e-3, mu=1.0))


def test_no_service_before_opening():
    s = QueueStateDistribution(-0.5, np.eye(5)[2])
    out = step(s, 0.0, _params())
    np.testing.assert_array_equal(out.probs, np.eye(5)[2])


def test_poisson_state_folds_tail():
    p = poisson_state(5.0, 3)
    assert p.sum() == pytest.approx(1.0)
    assert p[3] > p[2]


def test_moments_of_state_list():
    states = [QueueStateDistribution(0, np.eye(3)[0]), QueueStateDistribution(0, [0, 0.5, 0.5])]
    mean, var = moments(states)
    np.testing.assert_allclose(mean, [0, 1.5])
    np.testing.assert_allclose(var, [0, 0.25])


def test_propagation_conserves_and_empties(series_a, params_a):
    probs = series_a.probs
    assert np.all(probs >= 0)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    assert probs.shape[1] == params_a.truncation + 1


def test_queue_empties_after_support(eq_a, params_a):
    s = propagate(eq_a, params_a, until=40.0)
    after = s.times > eq_a.support_end + s.delta
    assert np.all(np.diff(s.probs[after, 0]) >= -1e-15)
    assert s.probs[-1, 0] > 1 - 1e-8


def test_initial_state_is_batch_poisson(eq_a, params_a, series_a):
    np.testing.assert_allclose(series_a.probs[0], poisson_state(params_a.lam * eq_a.atom, params_a.truncation))


def test_covariance_diagonal_and_decay(eq_a, params_a, series_a):
    assert covariance(eq_a, params_a, 5.0, 5.0, series_a) == pytest.approx(series_a.variance[series_a.index_of(5.0)])
    long = propagate(eq_a, params_a, until=40.0)
    near = covariance(eq_a, params_a, 5.0, 5.5, long)
    far = covariance(eq_a, params_a, 5.0, 38.0, long)
    assert near > 0.1
    assert abs(far) < 1e-6


def test_covariance_matrix_properties(eq_a, params_a, series_a):
    times = np.arange(1.0, 14.0, 1.5)
    ms = covariance_matrix(eq_a, params_a, times, series_a)
    cov = ms.covariance
    np.testing.assert_allclose(cov, cov.T)
    assert np.linalg.eigvalsh(cov).min() > -1e-10
    sd = np.sqrt(np.diag(cov))
    assert np.all(np.abs(cov) <= np.outer(sd, sd) + 1e-12)
    np.testing.assert_allclose(np.diag(cov), ms.variance)


def test_covariance_matches_simulation(eq_a, params_a, series_a):
    times = np.array([3.0, 6.0, 9.0])
    ms = covariance_matrix(eq_a, params_a, times, series_a)
    obs = simulate(eq_a, params_a, SamplingSchedule(times), 40_000, seed=11)
    emp = np.cov(obs.counts.T.astype(float))
    # standard error of a sample covariance is about sqrt(var_s var_t / n)
    se = np.sqrt(np.outer(np.diag(emp), np.diag(emp)) / obs.n)
    assert np.all(np.abs(emp - ms.covariance) < 5 * se)


def test_series_csv(tmp_path, series_a):
    path = tmp_path / "s.csv"
    write_series_csv(series_a, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["time", "p0", "mean", "var"]
    assert len(rows) == len(series_a) + 1
    assert float(rows[1][2]) == pytest.approx(series_a.mean[0])


def test_propagate_until_extends(eq_a, params_a):
    s = propagate(eq_a, params_a, until=25.0)
    assert s.times[-1] >= 25.0 - 1e-9
