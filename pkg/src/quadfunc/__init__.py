"""Estimation and testing of weighted quadratic functionals in inverse problems with an unknown operator."""

from .estimator import (RiskBoundBreakdown, components, estimate, estimate_alternative,
                        risk_bound, variance_of_u)
from .lower_bounds import (BoundKind, Construction, HypercubePrior, HypothesisPair,
                           build_hypercube_prior, build_two_point, chi2_mixture_vs_null,
                           kl_gaussian_products, lower_bound_value, worst_case_prior)
from .montecarlo import (ExperimentReport, fit_rate_slope, run_power_experiment,
                         run_risk_experiment, run_slope_experiment, verify_moment_identities)
from .selection import (RateRegime, SelectionResult, predicted_rate, predicted_testing_rate,
                        select_k_epsilon, select_k_gof, select_k_sd, select_k_sigma, select_k_star)
from .sequences import (ObservationSet, ProblemInstance, Regime, Role, SequenceFamily,
                        check_membership, constant, explicit, exponential, polynomial,
                        quad_functional, sample_observations)
from .testing import (PreconditionError, TestOutcome, gof_statistic, gof_test, sd_statistic,
                      sd_test)

__version__ = "0.1.0"

__all__ = [
    "BoundKind", "Construction", "ExperimentReport", "HypercubePrior", "HypothesisPair",
    "ObservationSet", "PreconditionError", "ProblemInstance", "RateRegime", "Regime",
    "RiskBoundBreakdown", "Role", "SelectionResult", "SequenceFamily", "TestOutcome",
    "build_hypercube_prior", "build_two_point", "check_membership", "chi2_mixture_vs_null",
    "components", "constant", "estimate", "estimate_alternative", "explicit", "exponential",
    "fit_rate_slope", "gof_statistic", "gof_test", "kl_gaussian_products", "lower_bound_value",
    "polynomial", "predicted_rate",
    "predicted_testing_rate", "quad_functional", "risk_bound", "run_power_experiment",
    "run_risk_experiment", "run_slope_experiment", "sample_observations", "sd_statistic",
    "sd_test", "select_k_epsilon", "select_k_gof", "select_k_sd", "select_k_sigma",
    "select_k_star", "variance_of_u", "verify_moment_identities", "worst_case_prior",
]
