"""Replication studies: simulate, estimate, summarise, and write plot-ready CSVs."""

from __future__ import annotations

import csv
import json
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .dynamics import propagate
from .equilibrium import EquilibriumDistribution, solve
from .estimator import EstimationResult, mean_estimator, sample_means
from .exceptions import InvalidParameters
from .model import ModelParams
from .simulator import SamplingSchedule, simulate


def schedule_from_entry(entry: Any) -> SamplingSchedule:
    """Build a schedule from an explicit list, {"m", "spacing"[, "start"]}, or {"start", "spacing", "stop"}."""
    if isinstance(entry, SamplingSchedule):
        return entry
    if isinstance(entry, dict):
        start = float(entry.get("start", 0.0))
        spacing = float(entry["spacing"])
        if "times" in entry:
            return SamplingSchedule(np.asarray(entry["times"], dtype=float), spacing)
        if "m" in entry:
            stop = start + spacing * (int(entry["m"]) - 1)
        else:
            stop = float(entry["stop"])
        return SamplingSchedule.regular(start, spacing, stop)
    if isinstance(entry, (tuple, list)) and len(entry) == 2 and not isinstance(entry[0], (list, tuple)):
        m, spacing = entry
        return SamplingSchedule.regular(0.0, float(spacing), float(spacing) * (int(m) - 1))
    return SamplingSchedule(np.asarray(entry, dtype=float))


def schedule_key(schedule: SamplingSchedule) -> int:
    """Stable 32-bit tag of a schedule's times, used in seed derivation."""
    return zlib.crc32(np.round(schedule.times, 9).astype("<f8").tobytes())


def schedule_label(schedule: SamplingSchedule) -> str:
    if schedule.spacing_hint is not None:
        return f"m={schedule.m} (spacing={schedule.spacing_hint:g})"
    return f"m={schedule.m}"


@dataclass
class ExperimentPlan:
    params: ModelParams
    n_values: list[int]
    schedules: list[SamplingSchedule]
    replications: int = 20
    master_seed: int = 0
    include_zero: bool = True

    def __post_init__(self):
        if self.replications < 1:
            raise InvalidParameters("replications must be >= 1")
        if not self.n_values or min(self.n_values) < 1:
            raise InvalidParameters("n_values must be positive day counts")
        self.schedules = [schedule_from_entry(s) for s in self.schedules]

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentPlan":
        known = {"params", "n_values", "schedules", "replications", "master_seed", "include_zero"}
        unknown = set(data) - known
        if unknown:
            raise InvalidParameters(f"unknown plan keys: {sorted(unknown)}")
        return cls(
            params=ModelParams.from_dict(data["params"]),
            n_values=[int(n) for n in data["n_values"]],
            schedules=list(data["schedules"]),
            replications=int(data.get("replications", 20)),
            master_seed=int(data.get("master_seed", 0)),
            include_zero=bool(data.get("include_zero", True)),
        )


def load_plan(path: str | Path) -> ExperimentPlan:
    with open(path) as fh:
        return ExperimentPlan.from_dict(json.load(fh))


@dataclass
class ExperimentSummary:
    n: int
    schedule: SamplingSchedule
    theta: float
    per_replication: np.ndarray
    results: list[EstimationResult] = field(repr=False, default_factory=list)

    @property
    def kappa(self) -> int:
        return int(self.per_replication.size)

    @property
    def successes(self) -> np.ndarray:
        return self.per_replication[~np.isnan(self.per_replication)]

    @property
    def eta(self) -> int:
        return int(self.successes.size)

    @property
    def ae(self) -> float | None:
        ok = self.successes
        return float(ok.mean()) if ok.size else None

    @property
    def std(self) -> float | None:
        ok = self.successes
        return float(ok.std(ddof=1)) if ok.size > 1 else None

    @property
    def mse(self) -> float | None:
        ok = self.successes
        return float(np.mean((ok - self.theta) ** 2)) if ok.size else None


@dataclass
class ExperimentResults:
    plan: ExperimentPlan
    equilibrium: EquilibriumDistribution
    cells: dict[tuple[int, int], ExperimentSummary]

    def cell(self, n: int, schedule_index: int = 0) -> ExperimentSummary:
        return self.cells[(n, schedule_index)]


def replication_stream(n: int, schedule: SamplingSchedule, k: int) -> tuple[int, int, int]:
    """Spawn key of replication k of cell (n, schedule); days extend it by their index."""
    return (int(n), schedule_key(schedule), int(k))


def run_experiment(plan: ExperimentPlan, eq: EquilibriumDistribution | None = None) -> ExperimentResults:
    """Simulate and estimate every (n, schedule, replication) cell of ``plan``.

    The equilibrium is solved once and shared.  Failed estimations are kept
    as NaN entries and only reduce eta.
    """
    params = plan.params
    eq = eq if eq is not None else solve(params)
    cells = {}
    for n in sorted(plan.n_values):
        for s_idx, schedule in enumerate(plan.schedules):
            values = np.full(plan.replications, np.nan)
            results = []
            for k in range(plan.replications):
                obs = simulate(eq, params, schedule, n, plan.master_seed,
                               replication_stream(n, schedule, k))
                res = mean_estimator(obs, params.mu, include_zero=plan.include_zero,
                                     variant=params.variant)
                results.append(res)
                if res.success:
                    values[k] = res.theta_hat
            cells[(n, s_idx)] = ExperimentSummary(n, schedule, params.theta, values, results)
    return ExperimentResults(plan, eq, cells)


def _fmt(x: float | None) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6g}"


def format_cell(summary: ExperimentSummary) -> str:
    """'AE (STD)' with '| eta = k' appended when some replications failed."""
    if summary.eta == 0:
        return "N/A | η = 0"
    text = f"{summary.ae:.4f}"
    if summary.std is not None:
        text += f" ({summary.std:.4f})"
    if summary.eta < summary.kappa:
        text += f" | η = {summary.eta}"
    return text


def box_summary(values: np.ndarray) -> dict[str, Any]:
    """Median, quartiles, 1.5-IQR whiskers and outliers."""
    values = np.sort(values[~np.isnan(values)])
    if values.size == 0:
        return {"median": None, "q1": None, "q3": None, "whisker_low": None,
                "whisker_high": None, "outliers": []}
    q1, med, q3 = np.percentile(values, [25, 50, 75])
    iqr = q3 - q1
    inside = values[(values >= q1 - 1.5 * iqr) & (values <= q3 + 1.5 * iqr)]
    outliers = values[(values < q1 - 1.5 * iqr) | (values > q3 + 1.5 * iqr)]
    return {"median": float(med), "q1": float(q1), "q3": float(q3),
            "whisker_low": float(inside.min()), "whisker_high": float(inside.max()),
            "outliers": [float(v) for v in outliers]}


def _write(path: Path, header: Sequence[str], rows) -> Path:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def emit_outputs(results: ExperimentResults, outdir: str | Path, tables: bool = True,
                 figures: bool = True) -> list[Path]:
    """Write summary tables and figure data as CSV files into ``outdir``."""
    if not results.cells:
        raise ValueError("no experiment cells to write")
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    plan = results.plan
    written: list[Path] = []
    ns = sorted(plan.n_values)
    labels = [schedule_label(s) for s in plan.schedules]

    if tables:
        rows = []
        for (n, s_idx), cell in sorted(results.cells.items()):
            rows.append([n, labels[s_idx], cell.schedule.m, _fmt(cell.schedule.spacing_hint),
                         _fmt(cell.ae), _fmt(cell.std), _fmt(cell.mse), cell.eta, cell.kappa])
        written.append(_write(out / "summary.csv",
                              ["n", "schedule", "m", "spacing", "ae", "std", "mse", "eta", "kappa"], rows))
        grid = [[f"n={n}"] + [format_cell(results.cells[(n, j)]) for j in range(len(labels))] for n in ns]
        written.append(_write(out / "table_ae_std.csv", ["sample size"] + labels, grid))
        rows = []
        for (n, s_idx), cell in sorted(results.cells.items()):
            rows += [[n, labels[s_idx], k + 1, _fmt(v)] for k, v in enumerate(cell.per_replication)]
        written.append(_write(out / "replications.csv", ["n", "schedule", "replication", "theta_hat"], rows))

    if figures:
        eq, params = results.equilibrium, plan.params
        series = propagate(eq, params, until=params.horizon)
        mean = series.mean
        rows = [[f"{t:.6f}", repr(eq.density_at(float(t))), repr(float(q))]
                for t, q in zip(series.times, mean)]
        written.append(_write(out / "fig_equilibrium.csv", ["time", "density", "mean_queue"], rows))

        n_big = ns[-1]
        schedule = plan.schedules[0]
        sample_cols = []
        for k in range(min(3, plan.replications)):
            obs = simulate(eq, params, schedule, n_big, plan.master_seed,
                           replication_stream(n_big, schedule, k))
            sample_cols.append(sample_means(obs))
        exact = [float(mean[series.index_of(t)]) if series.times[0] - 1e-9 <= t <= series.times[-1] + 1e-9
                 else 0.0 for t in schedule.times]
        rows = [[repr(float(t))] + [repr(float(c[i])) for c in sample_cols] + [repr(exact[i])]
                for i, t in enumerate(schedule.times)]
        written.append(_write(out / "fig_sample_means.csv",
                              ["time"] + [f"q_hat_{k + 1}" for k in range(len(sample_cols))] + ["q_exact"],
                              rows))

        first = next((r for r in results.cells[(n_big, 0)].results if r.success), None)
        rows = [] if first is None else [[repr(t), repr(first.pairing[t]), repr(first.per_pair[t])]
                                         for t in sorted(first.per_pair)]
        written.append(_write(out / "fig_pair_estimates.csv", ["time", "partner", "estimate"], rows))

        rows = []
        for (n, s_idx), cell in sorted(results.cells.items()):
            box = box_summary(cell.per_replication)
            rows.append([n, labels[s_idx], _fmt(box["median"]), _fmt(box["q1"]), _fmt(box["q3"]),
                         _fmt(box["whisker_low"]), _fmt(box["whisker_high"]),
                         ";".join(_fmt(v) for v in box["outliers"])])
        written.append(_write(out / "fig_boxplot.csv",
                              ["n", "schedule", "median", "q1", "q3", "whisker_low", "whisker_high",
                               "outliers"], rows))
    return written
