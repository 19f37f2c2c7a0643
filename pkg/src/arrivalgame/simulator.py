"""Day-by-day Monte Carlo of the queue under a fixed arrival distribution."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .equilibrium import EquilibriumDistribution
from .model import ModelParams, Variant


@dataclass(frozen=True)
class SamplingSchedule:
    times: np.ndarray
    spacing_hint: float | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 3:
            raise ValueError("a sampling schedule needs at least three times")
        if np.any(np.diff(times) <= 0):
            raise ValueError("sampling times must be strictly increasing")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)

    @classmethod
    def regular(cls, start: float, spacing: float, stop: float) -> "SamplingSchedule":
        count = int(round((stop - start) / spacing)) + 1
        times = start + spacing * np.arange(count)
        return cls(np.round(times, 9), spacing)

    @property
    def m(self) -> int:
        return int(self.times.size)


@dataclass(frozen=True)
class DayRealization:
    arrivals: np.ndarray
    departures: np.ndarray


@dataclass(frozen=True)
class ObservationSet:
    schedule: SamplingSchedule
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2 or counts.shape[1] != self.schedule.m:
            raise ValueError("counts must be an n x m matrix matching the schedule")
        if counts.size and counts.min() < 0:
            raise ValueError("counts must be nonnegative")
        object.__setattr__(self, "counts", counts.astype(np.int64, copy=False))

    @property
    def n(self) -> int:
        return int(self.counts.shape[0])

    @property
    def times(self) -> np.ndarray:
        return self.schedule.times


def day_stream(seed: int, day: int, *extra: int) -> np.random.Generator:
    """Counter-based generator for one day: Philox keyed by SeedSequence(seed, spawn_key)."""
    seq = np.random.SeedSequence(int(seed), spawn_key=(*extra, int(day)))
    return np.random.Generator(np.random.Philox(seq))


class ArrivalSampler:
    """Inverse-CDF sampler of single arrival times from a gridded equilibrium."""

    def __init__(self, eq: EquilibriumDistribution, params: ModelParams):
        self.eq = eq
        self.params = params
        self.cdf = eq.cdf_slots()
        self.interior = float(self.cdf[-1]) if self.cdf.size else 0.0
        total = eq.atom + eq.pre_mass + self.interior
        self.p_atom = eq.atom / total
        self.p_pre = eq.pre_mass / total
        self.closing = params.closing_time if params.variant is Variant.CLOSING_TIME else np.inf

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random(size)
        v = rng.random(size)
        jitter = rng.random(size)
        times = np.zeros(size)
        pre = (u >= self.p_atom) & (u < self.p_atom + self.p_pre)
        times[pre] = -self.eq.pre_width * v[pre]
        interior = u >= self.p_atom + self.p_pre
        if interior.any():
            slot = np.searchsorted(self.cdf, v[interior] * self.interior, side="right")
            slot = np.minimum(slot, len(self.cdf) - 1)
            t = (slot + jitter[interior]) * self.eq.grid_step
            times[interior] = np.minimum(t, self.closing)
        return times


def fcfs_departures(arrivals: np.ndarray, services: np.ndarray) -> np.ndarray:
    """D_i = max(A_i, D_{i-1}, 0) + S_i for arrivals sorted ascending."""
    if arrivals.size == 0:
        return arrivals.copy()
    cs = np.cumsum(services)
    start = np.maximum(arrivals, 0.0) - np.concatenate(([0.0], cs[:-1]))
    return np.maximum.accumulate(start) + cs


def sample_day(eq: EquilibriumDistribution, params: ModelParams, rng: np.random.Generator,
               sampler: ArrivalSampler | None = None) -> DayRealization:
    """One day: Poisson(lam) customers, iid arrival times from ``eq``, exponential services."""
    sampler = sampler or ArrivalSampler(eq, params)
    n = int(rng.poisson(params.lam))
    # batch members at zero are exchangeable, so draw order is a uniformly random service order
    arrivals = np.sort(sampler.draw(rng, n), kind="stable")
    services = rng.exponential(1.0 / params.mu, n)
    return DayRealization(arrivals, fcfs_departures(arrivals, services))


def observe(day: DayRealization, schedule: SamplingSchedule) -> np.ndarray:
    """Number in system at each sampling time (right-continuous counting)."""
    t = schedule.times
    arrived = np.searchsorted(day.arrivals, t, side="right")
    left = np.searchsorted(np.sort(day.departures), t, side="right")
    return (arrived - left).astype(np.int64)


def simulate(eq: EquilibriumDistribution, params: ModelParams, schedule: SamplingSchedule,
             n: int, seed: int, stream: Sequence[int] = ()) -> ObservationSet:
    """``n`` independent days; day ``l`` draws from ``day_stream(seed, l, *stream)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    sampler = ArrivalSampler(eq, params)
    counts = np.empty((n, schedule.m), dtype=np.int64)
    for day in range(n):
        rng = day_stream(seed, day, *stream)
        counts[day] = observe(sample_day(eq, params, rng, sampler), schedule)
    return ObservationSet(schedule, counts)


def write_observations_csv(obs: ObservationSet, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([repr(float(t)) for t in obs.times])
        writer.writerows(obs.counts.tolist())


def read_observations_csv(path: str | Path) -> ObservationSet:
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if len(rows) < 2:
        raise ValueError(f"{path}: expected a header of times and at least one day")
    times = np.array([float(x) for x in rows[0]])
    counts = np.array([[int(x) for x in row] for row in rows[1:]], dtype=np.int64)
    return ObservationSet(SamplingSchedule(times), counts)
