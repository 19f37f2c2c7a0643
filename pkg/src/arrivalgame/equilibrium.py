"""Symmetric Nash equilibrium arrival distributions.

Each solver bisects on a single scalar: the time-zero atom for the variants
without early birds, and the length of the pre-opening interval for the
early-bird variant.  For a candidate value the queue is pushed forward on
the grid; arrivals are switched on once the expected cost of arriving has
dropped to the cost at time zero, and from then on the density is whatever
keeps that cost flat, (mu/lam)(1 - P_0(t) - theta).  The candidate's total
mass decides the direction of the bisection.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .dynamics import QueueSeries, _check_step, _euler, poisson_state
from .exceptions import ClosingTimeTooEarly, InvalidParameters, NoInteriorArrivals, NonConvergence
from .model import BISECTION_TOL, EMPTY_TOL, MAX_BISECTION_ITER, ModelParams, Variant

ARTIFACT_FORMAT = "arrivalgame.equilibrium"
ARTIFACT_VERSION = 1


@dataclass(frozen=True)
class EquilibriumDistribution:
    """Gridded equilibrium arrival distribution.

    ``density[r]`` is the arrival density on the slot [r*delta, (r+1)*delta).
    Early birds additionally arrive with constant density ``pre_density`` on
    [-pre_width, 0).
    """

    variant: Variant
    atom: float
    pre_width: float
    pre_density: float
    support_start: float
    support_end: float
    density: np.ndarray
    equilibrium_cost: float
    grid_step: float
    params: ModelParams | None = field(default=None, compare=False)

    @property
    def grid_times(self) -> np.ndarray:
        return np.arange(len(self.density)) * self.grid_step

    @property
    def pre_mass(self) -> float:
        return self.pre_width * self.pre_density

    def total_mass(self) -> float:
        return self.atom + self.pre_mass + self.grid_step * float(np.sum(self.density))

    def density_at(self, t: float) -> float:
        if t < 0:
            return self.pre_density if t >= -self.pre_width else 0.0
        r = int(math.floor(t / self.grid_step + 1e-9))
        return float(self.density[r]) if r < len(self.density) else 0.0

    def cdf_slots(self) -> np.ndarray:
        """Cumulative interior mass at the right end of each grid slot."""
        return np.cumsum(self.density) * self.grid_step


def _support_cap(params: ModelParams, cost: float) -> int:
    """Last slot worth tracing: on the support beta * t <= cost, since the queue is nonnegative."""
    bound = 1.05 * cost / (params.beta * params.delta) + 10
    return int(min(math.ceil(bound), 10**9))


def _trace_atom(params: ModelParams, p_e: float, search_slot: int, early_exit: bool,
                last_slot: int | None = None):
    """Run the density construction for atom ``p_e``.

    The start of the support is searched up to ``search_slot``; the density
    continues until it vanishes or ``last_slot`` (default: the cost bound).
    Returns (mass, density list, r_a, r_b); r_a is None when the cost never
    came down to the time-zero cost.
    """
    lam, mu, delta, K = params.lam, params.mu, params.delta, params.truncation
    th = params.theta
    ab = params.alpha + params.beta
    beta = params.beta
    k = np.arange(K + 1, dtype=float)
    c = ab * lam * p_e / (2.0 * mu)
    p = poisson_state(lam * p_e, K)
    dens = [0.0]
    mass = p_e
    r_a = None
    r_b = None
    r = 0
    scale = mu / lam
    if last_slot is None:
        last_slot = max(search_slot, _support_cap(params, c))
    while r < last_slot:
        if r_a is None and r >= search_slot:
            break
        rate = lam * dens[r]
        _check_step(delta, rate, mu)
        p = _euler(p, rate, mu, delta)
        r += 1
        if r_a is None:
            cost = beta * r * delta + ab * float(k @ p) / mu
            if cost > c:
                dens.append(0.0)
                if p[0] > 1.0 - EMPTY_TOL:
                    # empty queue: cost only grows from here
                    break
                continue
            r_a = r
        f = scale * (1.0 - p[0] - th)
        if f <= 0.0:
            dens.append(0.0)
            r_b = r
            break
        dens.append(f)
        mass += delta * f
        if early_exit and mass >= 1.0:
            break
    return mass, dens, r_a, r_b


def _trace_pre_width(params: ModelParams, w: float, early_exit: bool):
    lam, mu, delta, K = params.lam, params.mu, params.delta, params.truncation
    last_slot = _support_cap(params, params.alpha * w)
    th = params.theta
    scale = mu / lam
    pre_mass = w * scale * (1.0 - th)
    p = poisson_state(lam * pre_mass, K)
    mass = pre_mass
    dens: list[float] = []
    r_b = None
    r = 0
    while True:
        f = scale * (1.0 - p[0] - th)
        if f <= 0.0:
            dens.append(0.0)
            r_b = r
            break
        dens.append(f)
        mass += delta * f
        if (early_exit and mass >= 1.0) or r >= last_slot:
            break
        rate = lam * f
        _check_step(delta, rate, mu)
        p = _euler(p, rate, mu, delta)
        r += 1
    return mass, dens, r_b


def _bisect(mass_of: Callable[[float], float], lo: float, hi: float, tol: float = BISECTION_TOL) -> float:
    """Bisection on a nondecreasing total-mass function for mass == 1."""
    for _ in range(MAX_BISECTION_ITER):
        if hi - lo <= tol:
            return 0.5 * (lo + hi)
        mid = 0.5 * (lo + hi)
        if mass_of(mid) >= 1.0:
            hi = mid
        else:
            lo = mid
    raise NonConvergence(f"bisection did not reach width {tol} in {MAX_BISECTION_ITER} iterations")


def _solve_atom(params: ModelParams, search_slot: int,
                last_slot: int | None = None) -> tuple[float, list[float], int | None, int | None]:
    p_e = _bisect(lambda p: _trace_atom(params, p, search_slot, True, last_slot)[0], 0.0, 1.0)
    _, dens, r_a, r_b = _trace_atom(params, p_e, search_slot, False, last_slot)
    return p_e, dens, r_a, r_b


def _atom_result(params: ModelParams, p_e: float, dens: list[float], r_a: int, end: float) -> EquilibriumDistribution:
    ab = params.alpha + params.beta
    return EquilibriumDistribution(
        variant=params.variant,
        atom=p_e,
        pre_width=0.0,
        pre_density=0.0,
        support_start=r_a * params.delta,
        support_end=end,
        density=np.asarray(dens, dtype=float),
        equilibrium_cost=ab * params.lam * p_e / (2.0 * params.mu),
        grid_step=params.delta,
        params=params,
    )


def solve_no_early_birds(params: ModelParams) -> EquilibriumDistribution:
    """Equilibrium with an atom at zero and an interval [t_a, t_b] of arrivals."""
    if params.variant is not Variant.NO_EARLY_BIRDS:
        raise InvalidParameters(f"expected variant no_early_birds, got {params.variant.value}")
    last_slot = int(round(params.horizon / params.delta))
    p_e, dens, r_a, r_b = _solve_atom(params, last_slot)
    if r_a is None:
        raise NoInteriorArrivals(f"no arrivals after time zero before the horizon {params.horizon}")
    end = (r_b if r_b is not None else len(dens) - 1) * params.delta
    return _atom_result(params, p_e, dens, r_a, end)


def solve_closing_time(params: ModelParams) -> EquilibriumDistribution:
    """Equilibrium when service closes at T; support {0} u [t_a, min(t_b, T)]."""
    if params.variant is not Variant.CLOSING_TIME:
        raise InvalidParameters(f"expected variant closing_time, got {params.variant.value}")
    T = params.closing_time
    last_slot = int(math.ceil(T / params.delta - 1e-9))
    p_e, dens, r_a, r_b = _solve_atom(params, last_slot, last_slot)
    if r_a is None:
        raise ClosingTimeTooEarly(f"closing time {T} precedes the interior support; everyone arrives at 0")
    end = r_b * params.delta if r_b is not None else T
    return _atom_result(params, p_e, dens, r_a, end)


def solve_early_birds(params: ModelParams) -> EquilibriumDistribution:
    """Equilibrium with constant density on [-w, 0) and a decaying density on [0, t_w]."""
    if params.variant is not Variant.EARLY_BIRDS:
        raise InvalidParameters(f"expected variant early_birds, got {params.variant.value}")
    hi = params.lam * (params.alpha + params.beta) / (params.mu * params.alpha)
    w = _bisect(lambda x: _trace_pre_width(params, x, early_exit=True)[0], 0.0, hi)
    _, dens, r_b = _trace_pre_width(params, w, early_exit=False)
    end = (r_b if r_b is not None else len(dens) - 1) * params.delta
    return EquilibriumDistribution(
        variant=params.variant,
        atom=0.0,
        pre_width=w,
        pre_density=params.mu / params.lam * (1.0 - params.theta),
        support_start=-w,
        support_end=end,
        density=np.asarray(dens, dtype=float),
        equilibrium_cost=params.alpha * w,
        grid_step=params.delta,
        params=params,
    )


def solve(params: ModelParams) -> EquilibriumDistribution:
    solvers = {
        Variant.NO_EARLY_BIRDS: solve_no_early_birds,
        Variant.CLOSING_TIME: solve_closing_time,
        Variant.EARLY_BIRDS: solve_early_birds,
    }
    return solvers[params.variant](params)


def expected_cost(t: float, eq: EquilibriumDistribution, series: QueueSeries, params: ModelParams) -> float:
    """Expected cost of a customer arriving at grid time ``t`` when all others follow ``eq``."""
    ab = params.alpha + params.beta
    if t == 0 and eq.atom > 0:
        # a batch member waits, on average, for half of the batch
        return ab * params.lam * eq.atom / (2.0 * params.mu)
    q = float(series.mean[series.index_of(t)])
    if t >= 0:
        return ab * q / params.mu + params.beta * t
    return ab * q / params.mu - params.alpha * t


def save_equilibrium(eq: EquilibriumDistribution, path: str | Path, params: ModelParams | None = None) -> None:
    params = params or eq.params
    doc = {
        "format": ARTIFACT_FORMAT,
        "version": ARTIFACT_VERSION,
        "params": None if params is None else params.to_dict(),
        "variant": eq.variant.value,
        "atom": eq.atom,
        "pre_width": eq.pre_width,
        "pre_density": eq.pre_density,
        "support_start": eq.support_start,
        "support_end": eq.support_end,
        "equilibrium_cost": eq.equilibrium_cost,
        "grid_step": eq.grid_step,
        "grid_times": [round(float(t), 12) for t in eq.grid_times],
        "density": [float(x) for x in eq.density],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_equilibrium(path: str | Path) -> EquilibriumDistribution:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != ARTIFACT_FORMAT:
        raise ValueError(f"{path}: not an equilibrium artifact")
    if doc.get("version") != ARTIFACT_VERSION:
        raise ValueError(f"{path}: unsupported artifact version {doc.get('version')}")
    params = None if doc.get("params") is None else ModelParams.from_dict(doc["params"])
    return EquilibriumDistribution(
        variant=Variant.parse(doc["variant"]),
        atom=float(doc["atom"]),
        pre_width=float(doc["pre_width"]),
        pre_density=float(doc["pre_density"]),
        support_start=float(doc["support_start"]),
        support_end=float(doc["support_end"]),
        density=np.asarray(doc["density"], dtype=float),
        equilibrium_cost=float(doc["equilibrium_cost"]),
        grid_step=float(doc["grid_step"]),
        params=params,
    )


def write_density_csv(eq: EquilibriumDistribution, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("time,density\n")
        if eq.pre_width > 0:
            fh.write(f"{-eq.pre_width!r},{eq.pre_density!r}\n")
        for t, f in zip(eq.grid_times, eq.density):
            fh.write(f"{t:.6f},{float(f)!r}\n")
