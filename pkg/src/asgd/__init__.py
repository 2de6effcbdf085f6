"""Averaged stochastic gradient estimators with rate verification.

One fresh sample per step drives the Robbins-Monro recursion; its running
average attains the faster 1/n mean-squared rate.  The package bundles the
streaming estimator, the concrete objectives (geometric quantiles/median,
robust cosh regression, logistic regression, a validation quadratic), batch
oracles, numerical assumption checks, seeded data generators and a Monte
Carlo harness that fits convergence-rate slopes.
"""

__version__ = "0.1.0"

from . import errors
from .datagen import DistributionSpec, SampleStream, freeze
from .estimator import EstimatorState, StepSchedule, init_state, run_stream, step
from .harness import (ExperimentConfig, RateReport, fit_loglog_slope,
                      geometric_checkpoints, rate_experiment, run_replicates)
from .objectives import (CoshLogisticObjective, GeometricQuantileObjective,
                         LogisticObjective, QuadraticObjective,
                         empirical_batch_gradient, empirical_loss)
from .oracle import OracleResult, batch_gd, ground_truth, weiszfeld

__all__ = [
    "__version__",
    "errors",
    "DistributionSpec", "SampleStream", "freeze",
    "EstimatorState", "StepSchedule", "init_state", "run_stream", "step",
    "ExperimentConfig", "RateReport", "fit_loglog_slope",
    "geometric_checkpoints", "rate_experiment", "run_replicates",
    "CoshLogisticObjective", "GeometricQuantileObjective",
    "LogisticObjective", "QuadraticObjective",
    "empirical_batch_gradient", "empirical_loss",
    "OracleResult", "batch_gd", "ground_truth", "weiszfeld",
]
