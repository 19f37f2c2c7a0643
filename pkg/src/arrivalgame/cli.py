"""Command-line entry point: solve, simulate, estimate, experiment."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .dynamics import covariance_matrix, propagate, write_series_csv
from .equilibrium import load_equilibrium, save_equilibrium, solve, write_density_csv
from .estimator import asymptotic_variance, mean_estimator
from .exceptions import ArrivalGameError
from .experiments import emit_outputs, load_plan, run_experiment
from .model import ModelParams, Variant, load_config
from .simulator import SamplingSchedule, read_observations_csv, simulate, write_observations_csv

log = logging.getLogger("arrivalgame")


def _cmd_solve(args) -> int:
    params, _ = load_config(args.config)
    eq = solve(params)
    save_equilibrium(eq, args.out, params)
    if args.csv:
        write_density_csv(eq, args.csv)
    if args.series_csv:
        write_series_csv(propagate(eq, params), args.series_csv)
    print(json.dumps({
        "variant": eq.variant.value, "atom": eq.atom, "pre_width": eq.pre_width,
        "support_start": eq.support_start, "support_end": eq.support_end,
        "equilibrium_cost": eq.equilibrium_cost, "theta": params.theta,
    }))
    return 0


def _schedule(args) -> SamplingSchedule:
    if args.times:
        return SamplingSchedule(np.array([float(x) for x in args.times.split(",")]))
    if args.spacing is None or args.stop is None:
        raise SystemExit("give --times or --spacing and --stop")
    return SamplingSchedule.regular(args.start, args.spacing, args.stop)


def _params_of(eq, config) -> ModelParams:
    if config:
        return load_config(config)[0]
    if eq.params is None:
        raise SystemExit("equilibrium artifact has no parameter header; pass --config")
    return eq.params


def _cmd_simulate(args) -> int:
    eq = load_equilibrium(args.equilibrium)
    params = _params_of(eq, args.config)
    obs = simulate(eq, params, _schedule(args), args.n, args.seed)
    write_observations_csv(obs, args.out)
    return 0


def _cmd_estimate(args) -> int:
    obs = read_observations_csv(args.observations)
    variant = Variant.parse(args.variant)
    truth = None
    eq = params = None
    if args.equilibrium:
        eq = load_equilibrium(args.equilibrium)
        params = _params_of(eq, None)
        truth = (eq.support_start, eq.support_end)
    result = mean_estimator(obs, args.mu, include_zero=not args.no_zero, variant=variant, truth=truth)
    if eq is not None and result.success and result.g is not None:
        sigma = covariance_matrix(eq, params, result.weight_times)
        result.asymptotic_variance = asymptotic_variance(result.g, sigma)
    doc = result.to_dict(obs.times)
    text = json.dumps(doc, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def _cmd_experiment(args) -> int:
    plan = load_plan(args.plan)
    if args.seed is not None:
        plan.master_seed = args.seed
    results = run_experiment(plan)
    tables = args.tables or not args.figures
    figures = args.figures or not args.tables
    for path in emit_outputs(results, args.out, tables=tables, figures=figures):
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arrivalgame", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="compute the equilibrium arrival distribution")
    p.add_argument("--config", required=True, help="JSON parameter file")
    p.add_argument("--out", required=True, help="equilibrium artifact (JSON)")
    p.add_argument("--csv", help="optional (time, density) CSV")
    p.add_argument("--series-csv", help="optional (time, p0, mean, var) CSV")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("simulate", help="simulate daily queue-length observations")
    p.add_argument("--equilibrium", required=True)
    p.add_argument("--config", help="override the parameters stored in the artifact")
    p.add_argument("--times", help="comma-separated sampling times")
    p.add_argument("--start", type=float, default=0.0)
    p.add_argument("--spacing", type=float)
    p.add_argument("--stop", type=float)
    p.add_argument("-n", "--n", type=int, required=True, help="number of days")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("estimate", help="estimate theta from observations")
    p.add_argument("--observations", required=True)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--variant", default="no_early_birds")
    p.add_argument("--no-zero", action="store_true", help="leave time 0 out of the estimation set")
    p.add_argument("--equilibrium", help="oracle mode: grid truth and asymptotic variance")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("experiment", help="run a replication study")
    p.add_argument("--plan", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--tables", action="store_true")
    p.add_argument("--figures", action="store_true")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_experiment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ArrivalGameError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
