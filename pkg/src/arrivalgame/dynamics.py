"""Forward-equation propagation of the queue-length distribution.

Q(t) is the number of customers in the system at time t, the one in
service included.  The distribution P_0(t)..P_K(t) is advanced on the grid
{r * delta} by explicit Euler steps of the birth-death forward equations;
the top state is closed by complementarity, which amounts to blocking
arrivals once K customers are present.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .exceptions import StepTooCoarse
from .model import EMPTY_TOL, ModelParams

if TYPE_CHECKING:
    from .equilibrium import EquilibriumDistribution

log = logging.getLogger(__name__)

SOURCE_CUTOFF = 1e-12
CLAMP_LOG_TOL = 1e-9


@dataclass(frozen=True)
class QueueStateDistribution:
    time: float
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size < 2:
            raise ValueError("probs must be a vector of length K + 1 >= 2")
        if np.any(probs < 0) or np.any(probs > 1) or abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError("probs must be a probability vector")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def mean(self) -> float:
        return float(np.arange(self.probs.size) @ self.probs)

    @property
    def variance(self) -> float:
        k = np.arange(self.probs.size)
        m = k @ self.probs
        return float(max((k * k) @ self.probs - m * m, 0.0))


@dataclass(frozen=True)
class MomentSummary:
    times: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    covariance: np.ndarray


def poisson_state(mean: float, truncation: int) -> np.ndarray:
    """Poisson(mean) pmf on 0..K with the tail beyond K folded into K."""
    probs = np.zeros(truncation + 1)
    if mean <= 0:
        probs[0] = 1.0
        return probs
    p = math.exp(-mean)
    for k in range(truncation):
        probs[k] = p
        p *= mean / (k + 1)
    probs[truncation] = max(0.0, 1.0 - probs[:truncation].sum())
    return probs


def _check_step(delta: float, rate: float, mu: float) -> None:
    if delta * (rate + mu) >= 1.0:
        raise StepTooCoarse(
            f"delta*(arrival_rate+mu) = {delta * (rate + mu):.4g} >= 1; refine the grid"
        )


def _euler(p: np.ndarray, rate: float, mu: float, delta: float) -> np.ndarray:
    """One Euler step along the last axis (works for a vector or a stack of rows)."""
    inflow = delta * rate * p[..., :-1]
    outflow = delta * mu * p[..., 1:]
    new = p.copy()
    new[..., :-1] -= inflow
    new[..., 1:] += inflow
    new[..., 1:] -= outflow
    new[..., :-1] += outflow
    new[..., -1] = 1.0 - new[..., :-1].sum(axis=-1)
    if new.min() < 0.0:
        deficit = -new[new < 0].sum()
        if deficit > CLAMP_LOG_TOL:
            log.debug("clamped negative probability mass %.3g", deficit)
        np.clip(new, 0.0, 1.0, out=new)
        new /= new.sum(axis=-1, keepdims=True)
    return new


def step(state: QueueStateDistribution, arrival_rate: float, params: ModelParams) -> QueueStateDistribution:
    """Advance ``state`` by one grid step under the given arrival intensity.

    Service is active only from time zero on; before that (early-bird
    arrivals) the queue can only grow.
    """
    if arrival_rate < 0:
        raise ValueError("arrival_rate must be nonnegative")
    mu = params.mu if state.time >= 0 else 0.0
    _check_step(params.delta, arrival_rate, mu)
    new = _euler(np.asarray(state.probs, dtype=float), arrival_rate, mu, params.delta)
    return QueueStateDistribution(state.time + params.delta, new)


@dataclass(frozen=True)
class QueueSeries(Sequence):
    """Queue-length distributions on consecutive grid points.

    ``probs[i]`` is the distribution at ``times[i] = (start_index + i) * delta``;
    ``rates[i]`` is the arrival intensity applied on [times[i], times[i+1]).
    """

    start_index: int
    delta: float
    probs: np.ndarray
    rates: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return (self.start_index + np.arange(len(self.probs))) * self.delta

    def __len__(self) -> int:
        return len(self.probs)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        return QueueStateDistribution((self.start_index + i) * self.delta, self.probs[i])

    def index_of(self, t: float) -> int:
        r = round(t / self.delta)
        if abs(r * self.delta - t) > 1e-6 * max(1.0, self.delta):
            raise ValueError(f"time {t} is not on the grid of step {self.delta}")
        i = r - self.start_index
        if not 0 <= i < len(self.probs):
            raise ValueError(f"time {t} is outside the propagated range "
                             f"[{self.times[0]:g}, {self.times[-1]:g}]")
        return i

    def state_at(self, t: float) -> QueueStateDistribution:
        return self[self.index_of(t)]

    @property
    def mean(self) -> np.ndarray:
        return self.probs @ np.arange(self.probs.shape[1])

    @property
    def variance(self) -> np.ndarray:
        k = np.arange(self.probs.shape[1])
        m = self.probs @ k
        return np.maximum(self.probs @ (k * k) - m * m, 0.0)


def _prezero_rate(eq: "EquilibriumDistribution", params: ModelParams) -> float:
    return params.lam * eq.pre_density


def propagate(eq: "EquilibriumDistribution", params: ModelParams,
              until: float | None = None, since: float | None = None) -> QueueSeries:
    """Queue-length distributions under ``eq`` from its first support time.

    Stops once the support is over and P_0 exceeds 1 - 1e-8, or at the
    horizon, unless ``until`` asks for a longer range.  ``since`` extends an
    early-bird series to earlier (empty-queue) times.
    """
    delta, K, mu = params.delta, params.truncation, params.mu
    rows: list[np.ndarray] = []
    rates: list[float] = []
    if eq.pre_width > 0:
        nu = _prezero_rate(eq, params)
        first = -int(math.floor(eq.pre_width / delta + 1e-9))
        if since is not None:
            first = min(first, int(math.floor(since / delta + 1e-9)))
        for r in range(first, 0):
            rows.append(poisson_state(nu * max(0.0, r * delta + eq.pre_width), K))
            rates.append(nu if r * delta + eq.pre_width >= 0 else 0.0)
        start = first
        p = poisson_state(nu * eq.pre_width, K)
    else:
        start = 0
        p = poisson_state(params.lam * eq.atom, K)

    density = eq.density
    end_slot = len(density)
    horizon_slot = int(round(params.horizon / delta))
    until_slot = -1 if until is None else int(math.ceil(until / delta - 1e-9))
    r = 0
    while True:
        rows.append(p)
        rate = params.lam * density[r] if r < end_slot else 0.0
        rates.append(rate)
        past_support = r >= end_slot
        if r >= until_slot and ((past_support and p[0] > 1.0 - EMPTY_TOL) or r >= horizon_slot):
            break
        _check_step(delta, rate, mu)
        p = _euler(p, rate, mu, delta)
        r += 1
    return QueueSeries(start, delta, np.array(rows), np.array(rates))


def moments(series: QueueSeries | Sequence[QueueStateDistribution]) -> tuple[np.ndarray, np.ndarray]:
    """Mean and variance of the queue length at each entry of ``series``."""
    if isinstance(series, QueueSeries):
        return series.mean, series.variance
    if len(series) == 0:
        raise ValueError("series is empty")
    probs = np.array([s.probs for s in series])
    k = np.arange(probs.shape[1])
    mean = probs @ k
    return mean, np.maximum(probs @ (k * k) - mean * mean, 0.0)


def _shift_poisson(rows: np.ndarray, mean: float) -> np.ndarray:
    """Add an independent Poisson(mean) count to each row distribution (tail folded into K)."""
    K = rows.shape[-1] - 1
    inc = poisson_state(mean, K)
    out = np.zeros_like(rows)
    for j in range(K + 1):
        if inc[j] == 0.0:
            continue
        out[..., j:] += inc[j] * rows[..., : K + 1 - j]
        out[..., K] += inc[j] * rows[..., K + 1 - j:].sum(axis=-1)
    return out


def _conditional_rows(eq: "EquilibriumDistribution", params: ModelParams, series: QueueSeries,
                      i_from: int, targets: Sequence[int], sources: np.ndarray) -> list[np.ndarray]:
    """Rows of P[Q(t) = . | Q(s) = k] for k in ``sources`` at each target index."""
    K = params.truncation
    rows = np.zeros((len(sources), K + 1))
    rows[np.arange(len(sources)), sources] = 1.0
    out = []
    i = i_from
    zero_i = -series.start_index
    nu = _prezero_rate(eq, params)
    for target in targets:
        if target < i:
            raise ValueError("targets must be sorted and not precede the source")
        if i < zero_i:
            # pure arrivals before service opens; exact Poisson increment
            stop = min(target, zero_i)
            t0 = max((series.start_index + i) * series.delta, -eq.pre_width)
            t1 = max((series.start_index + stop) * series.delta, -eq.pre_width)
            rows = _shift_poisson(rows, nu * max(0.0, t1 - t0))
            i = stop
        while i < target:
            rate = series.rates[i] if i < len(series.rates) else 0.0
            rows = _euler(rows, rate, params.mu, params.delta)
            i += 1
        out.append(rows)
    return out


def covariance(eq: "EquilibriumDistribution", params: ModelParams, s: float, t: float,
               series: QueueSeries) -> float:
    """Cov[Q(s), Q(t)] from conditional re-propagation out of each state at s."""
    if s > t:
        raise ValueError("covariance requires s <= t")
    i, j = series.index_of(s), series.index_of(t)
    p_s = series.probs[i]
    k = np.arange(p_s.size)
    if i == j:
        return float(series.variance[i])
    sources = np.flatnonzero(p_s > SOURCE_CUTOFF)
    (cond,) = _conditional_rows(eq, params, series, i, [j], sources)
    cross = float(np.sum(k[sources] * p_s[sources] * (cond @ k)))
    return cross - float(series.mean[i] * series.mean[j])


def covariance_matrix(eq: "EquilibriumDistribution", params: ModelParams,
                      times: Sequence[float], series: QueueSeries | None = None) -> MomentSummary:
    """Means, variances and the full covariance matrix at sorted grid times."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a nonempty vector")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    if series is None or times[-1] > series.times[-1] + 1e-9 or times[0] < series.times[0] - 1e-9:
        series = propagate(eq, params, until=float(times[-1]), since=float(min(times[0], 0.0)))
    idx = [series.index_of(t) for t in times]
    mean = series.mean[idx]
    var = series.variance[idx]
    n = len(times)
    cov = np.diag(var).astype(float)
    k = np.arange(params.truncation + 1)
    for a in range(n - 1):
        p_s = series.probs[idx[a]]
        sources = np.flatnonzero(p_s > SOURCE_CUTOFF)
        conds = _conditional_rows(eq, params, series, idx[a], idx[a + 1:], sources)
        weights = k[sources] * p_s[sources]
        for b, cond in enumerate(conds, start=a + 1):
            value = float(weights @ (cond @ k)) - mean[a] * mean[b]
            cov[a, b] = cov[b, a] = value
    return MomentSummary(times, mean, var, cov)


def write_series_csv(series: QueueSeries, path: str | Path) -> None:
    """Write (time, p0, mean, var) per grid step."""
    mean, var = series.mean, series.variance
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "p0", "mean", "var"])
        for t, p0, m, v in zip(series.times, series.probs[:, 0], mean, var):
            writer.writerow([f"{t:.6f}", repr(float(p0)), repr(float(m)), repr(float(v))])
