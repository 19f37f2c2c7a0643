"""Method-of-moments estimation of theta = beta / (alpha + beta).

In equilibrium the expected cost is flat on the support, which makes the
expected queue length linear there with slope -theta * mu.  The estimator
pairs each sampling time inside the estimated support with the time
farthest away from it, turns each pair into a slope estimate, and averages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .dynamics import MomentSummary
from .exceptions import NoIncreaseObserved
from .model import Variant
from .simulator import ObservationSet, SamplingSchedule

TIE_TOL = 1e-9


@dataclass(frozen=True)
class SupportEstimate:
    """Indices (0-based, into the sampling times) of the estimated support ends."""

    a_hat_index: int
    b_hat_index: int
    a_tilde_index: int | None = None
    b_tilde_index: int | None = None


@dataclass
class EstimationResult:
    theta_hat: float
    success: bool
    reason: str = ""
    support: SupportEstimate | None = None
    estimation_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    pairing: dict[float, float] = field(default_factory=dict)
    per_pair: dict[float, float] = field(default_factory=dict)
    weight_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    g: np.ndarray | None = None
    k: np.ndarray | None = None
    asymptotic_variance: float | None = None
    n: int = 0

    def confidence_interval(self, z: float = 1.96) -> tuple[float, float] | None:
        if not self.success or self.asymptotic_variance is None or self.n < 1:
            return None
        half = z * math.sqrt(self.asymptotic_variance / self.n)
        return (self.theta_hat - half, self.theta_hat + half)

    def to_dict(self, times: np.ndarray | None = None) -> dict:
        out = {
            "success": self.success,
            "reason": self.reason,
            "theta_hat": None if not self.success else self.theta_hat,
            "n": self.n,
            "estimation_times": [float(t) for t in self.estimation_times],
            "pairs": [
                {"t": float(t), "partner": float(self.pairing[t]), "estimate": float(self.per_pair[t])}
                for t in self.pairing
            ],
            "weight_times": [float(t) for t in self.weight_times],
            "g": None if self.g is None else [float(x) for x in self.g],
            "k": None if self.k is None else [float(x) for x in self.k],
            "asymptotic_variance": self.asymptotic_variance,
        }
        if self.support is not None:
            sup = self.support
            out["support"] = {
                "a_hat_index": sup.a_hat_index,
                "b_hat_index": sup.b_hat_index,
                "a_tilde_index": sup.a_tilde_index,
                "b_tilde_index": sup.b_tilde_index,
            }
            if times is not None:
                out["support"]["t_a_hat"] = float(times[sup.a_hat_index])
                out["support"]["t_b_hat"] = float(times[sup.b_hat_index])
        ci = self.confidence_interval()
        out["confidence_interval_95"] = None if ci is None else list(ci)
        return out


def sample_means(obs: ObservationSet) -> np.ndarray:
    return obs.counts.mean(axis=0)


def grid_truth(times: np.ndarray, t_a: float, t_b: float) -> tuple[int | None, int | None]:
    """First sampling index at or after t_a, last at or before t_b."""
    after = np.flatnonzero(times >= t_a - TIE_TOL)
    before = np.flatnonzero(times <= t_b + TIE_TOL)
    return (int(after[0]) if after.size else None, int(before[-1]) if before.size else None)


def estimate_support(obs: ObservationSet, variant: Variant | str = Variant.NO_EARLY_BIRDS,
                     truth: tuple[float, float] | None = None) -> SupportEstimate:
    """First and last sampling indices bracketing an observed queue increase.

    a_hat is the earliest index i with Xi_i - Xi_{i-1} >= 1 on some day and
    b_hat the latest index i with Xi_{i+1} - Xi_i >= 1.  Without early birds,
    steps starting at t <= 0 are skipped: the batch at zero is not part of
    the interval of continuous arrivals.  ``truth`` = (t_a, t_b) fills in the
    grid-truth indices.
    """
    variant = Variant.parse(variant)
    times = obs.times
    if times.size < 3:
        raise ValueError("support estimation needs at least three sampling times")
    rises = (np.diff(obs.counts, axis=1) >= 1).any(axis=0)
    if variant is not Variant.EARLY_BIRDS:
        rises &= times[:-1] > 0
    steps = np.flatnonzero(rises)
    if steps.size == 0:
        raise NoIncreaseObserved("no day shows an increase between consecutive sampling times")
    a_tilde = b_tilde = None
    if truth is not None:
        a_tilde, b_tilde = grid_truth(times, *truth)
    return SupportEstimate(int(steps[0] + 1), int(steps[-1]), a_tilde, b_tilde)


def farthest_partner(t: float, candidates) -> float:
    """Element of ``candidates`` farthest from ``t``; ties go to the smaller time."""
    lo, hi = float(np.min(candidates)), float(np.max(candidates))
    if len(candidates) < 2 or lo == hi:
        raise ValueError("need at least two distinct candidate times")
    return lo if abs(t - lo) >= abs(hi - t) - TIE_TOL else hi


def pair_estimate(t_i: float, t_j: float, q_i: float, q_j: float, mu: float) -> float:
    """Slope estimate of theta from mean queue lengths at two times.

    A time of zero stands for the batch at opening, whose members wait on
    average for half the batch, hence the half queue.
    """
    if t_i == t_j:
        raise ValueError("pair_estimate needs two distinct times")
    if t_j == 0:
        return -(q_i - q_j / 2.0) / (mu * t_i)
    if t_i == 0:
        return -(q_j - q_i / 2.0) / (mu * t_j)
    return -(q_i - q_j) / (mu * (t_i - t_j))


def pair_estimate_early_birds(s: float, t: float, q_s: float, q_t: float, mu: float) -> float:
    """Pair estimate when arrivals before opening are allowed.

    Before zero the mean queue grows with slope (1 - theta) mu, after zero it
    falls with slope theta mu; a pair straddling zero mixes the two.
    """
    if s == t:
        raise ValueError("pair estimate needs two distinct times")
    if s > t:
        s, t, q_s, q_t = t, s, q_t, q_s
    slope = (q_s - q_t) / (mu * (s - t))
    if t <= 0:
        return 1.0 - slope
    if s <= 0 < t:
        return s / (s - t) - slope
    return -slope


def pairing_weights(times, mu: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Linear weights g with theta_hat = sum g_i q_hat(t_i) (plus a constant for early birds).

    k_i = |T| (t_i - d(t_i)) mu and g_i = sum_{j != i, d(t_j) = t_i} 1/k_j - 1/k_i.
    Returns (g, k, partner index).
    """
    times = np.asarray(times, dtype=float)
    size = times.size
    partner = np.array([int(np.flatnonzero(times == farthest_partner(t, times))[0]) for t in times])
    k = size * (times - times[partner]) * mu
    g = -1.0 / k
    np.add.at(g, partner, 1.0 / k)
    return g, k, partner


def asymptotic_variance(g, sigma: MomentSummary | np.ndarray) -> float:
    """g Sigma g^T written as the variance/covariance double sum."""
    g = np.asarray(g, dtype=float)
    cov = sigma.covariance if isinstance(sigma, MomentSummary) else np.asarray(sigma, dtype=float)
    if cov.shape != (g.size, g.size):
        raise ValueError(f"dimension mismatch: g has {g.size} entries, Sigma is {cov.shape}")
    total = float(np.sum(g * g * np.diag(cov)))
    for i in range(g.size):
        total += 2.0 * g[i] * float(g[i + 1:] @ cov[i, i + 1:])
    return max(total, 0.0)


def _restrict(sigma: MomentSummary, times: np.ndarray) -> np.ndarray:
    idx = []
    for t in times:
        hit = np.flatnonzero(np.abs(sigma.times - t) <= TIE_TOL)
        if hit.size == 0:
            raise ValueError(f"covariance summary has no entry for time {t}")
        idx.append(int(hit[0]))
    return sigma.covariance[np.ix_(idx, idx)]


def _estimate(obs: ObservationSet, mu: float, variant: Variant, include_zero: bool,
              sigma: MomentSummary | None, truth: tuple[float, float] | None) -> EstimationResult:
    times = obs.times
    try:
        support = estimate_support(obs, variant, truth)
    except NoIncreaseObserved as exc:
        return EstimationResult(math.nan, False, str(exc), n=obs.n)
    if support.a_hat_index > support.b_hat_index:
        return EstimationResult(math.nan, False, "estimated support is empty (t_a_hat > t_b_hat)",
                                support=support, n=obs.n)
    inner = np.arange(support.a_hat_index, support.b_hat_index + 1)
    chosen = inner
    early = variant is Variant.EARLY_BIRDS
    if include_zero and not early:
        zero = np.flatnonzero(times == 0)
        if zero.size:
            chosen = np.concatenate((zero[:1], inner))
    if chosen.size < 2:
        return EstimationResult(math.nan, False, "fewer than two estimation times",
                                support=support, estimation_times=times[chosen], n=obs.n)
    q_hat = sample_means(obs)
    est_times = times[chosen]
    pair_fn = pair_estimate_early_birds if early else pair_estimate
    pairing, per_pair = {}, {}
    for i in chosen:
        t = float(times[i])
        d = farthest_partner(t, est_times)
        j = chosen[np.flatnonzero(est_times == d)[0]]
        pairing[t] = d
        per_pair[t] = pair_fn(t, d, float(q_hat[i]), float(q_hat[j]), mu)
    theta_hat = float(np.mean(list(per_pair.values())))

    # weights and variance over the interior support only
    weight_times = times[inner] if not early else est_times
    g = k = None
    avar = None
    if weight_times.size >= 2 and (early or np.all(weight_times > 0)):
        g, k, _ = pairing_weights(weight_times, mu)
        if sigma is not None:
            avar = asymptotic_variance(g, _restrict(sigma, weight_times))
    return EstimationResult(theta_hat, True, "", support, est_times, pairing, per_pair,
                            weight_times, g, k, avar, obs.n)


def mean_estimator(obs: ObservationSet, mu: float, include_zero: bool = True,
                   sigma: MomentSummary | None = None, variant: Variant | str = Variant.NO_EARLY_BIRDS,
                   truth: tuple[float, float] | None = None) -> EstimationResult:
    """Average of farthest-partner pair estimates over the estimated support.

    With ``include_zero`` the opening time joins the estimation set through
    the half-queue pair formula; the weights and asymptotic variance always
    refer to the positive sampling times.  Failures come back with
    ``success=False`` rather than raising.
    """
    variant = Variant.parse(variant)
    if variant is Variant.EARLY_BIRDS:
        return estimator_early_birds(obs, mu, sigma=sigma, truth=truth)
    return _estimate(obs, mu, variant, include_zero, sigma, truth)


def estimator_early_birds(obs: ObservationSet, mu: float, sigma: MomentSummary | None = None,
                          truth: tuple[float, float] | None = None) -> EstimationResult:
    return _estimate(obs, mu, Variant.EARLY_BIRDS, False, sigma, truth)


def fixed_set_estimate(q_hat_at: np.ndarray, times, mu: float) -> float:
    """theta_hat on a given set of positive times (no support estimation)."""
    g, _, _ = pairing_weights(times, mu)
    return float(g @ np.asarray(q_hat_at, dtype=float))


class ThetaEstimator(BaseEstimator):
    """Estimate theta from an n x m matrix of daily queue-length counts.

    Parameters
    ----------
    times : sequence of float
        Sampling times shared by every day (columns of ``X``).
    mu : float
        Known service rate.
    variant : str
        ``"no_early_birds"``, ``"closing_time"`` or ``"early_birds"``.
    include_zero : bool
        Use the opening time as an estimation point (variants without
        early birds only).

    Attributes set by ``fit``: ``theta_``, ``result_``, ``support_``,
    ``g_`` and, when ``moments`` is passed, ``asymptotic_variance_``.
    """

    def __init__(self, times=None, mu=1.0, variant="no_early_birds", include_zero=True):
        self.times = times
        self.mu = mu
        self.variant = variant
        self.include_zero = include_zero

    def fit(self, X, y=None, moments: MomentSummary | None = None):
        X = check_array(X, dtype=None, ensure_min_features=3)
        if not np.issubdtype(X.dtype, np.integer):
            if not np.all(np.equal(np.mod(X, 1), 0)):
                raise ValueError("queue-length counts must be integers")
            X = X.astype(np.int64)
        if X.min() < 0:
            raise ValueError("queue-length counts must be nonnegative")
        if self.times is None:
            raise ValueError("ThetaEstimator needs the sampling times")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        obs = ObservationSet(SamplingSchedule(np.asarray(self.times, dtype=float)), X)
        self.result_ = mean_estimator(obs, float(self.mu), include_zero=self.include_zero,
                                      sigma=moments, variant=self.variant)
        self.theta_ = self.result_.theta_hat
        self.support_ = self.result_.support
        self.g_ = self.result_.g
        self.asymptotic_variance_ = self.result_.asymptotic_variance
        self.n_days_ = obs.n
        return self

    def confidence_interval(self, z: float = 1.96):
        check_is_fitted(self, "result_")
        return self.result_.confidence_interval(z)
