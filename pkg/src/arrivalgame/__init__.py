"""Equilibrium arrivals to a single-server queue and estimation of the cost ratio theta."""

from .dynamics import (MomentSummary, QueueSeries, QueueStateDistribution, covariance,
                       covariance_matrix, moments, propagate, step)
from .equilibrium import (EquilibriumDistribution, expected_cost, load_equilibrium, save_equilibrium,
                          solve, solve_closing_time, solve_early_birds, solve_no_early_birds)
from .estimator import (EstimationResult, SupportEstimate, ThetaEstimator, asymptotic_variance,
                        estimate_support, estimator_early_birds, farthest_partner, mean_estimator,
                        pair_estimate, pairing_weights, sample_means)
from .experiments import ExperimentPlan, ExperimentSummary, emit_outputs, run_experiment
from .model import ModelParams, Variant, default_truncation, theta
from .simulator import (DayRealization, ObservationSet, SamplingSchedule, observe, sample_day,
                        simulate)

__version__ = "0.1.0"
