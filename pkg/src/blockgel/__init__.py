"""Blockwise generalized empirical likelihood for weakly dependent data."""
from .blocking import BlockMoments, BlockScheme, block_moments, make_scheme, regime_scheme
from .data import Dataset, read_csv
from .errors import ConfigurationError, DataError, EstimationError, GelError, NumericalDomainError
from .inference import (
    CovarianceEstimates,
    TestReport,
    confidence_interval,
    covariances,
    gel_ratio,
    overid_test,
    wilks_test,
)
from .inner import MultiplierState, SolverOptions, implied_probabilities, solve_lambda
from .links import LinkFunction, LinkKind, make_link
from .models import MomentModel, model_logistic, model_mean, model_mean_unit_variance, model_var_residual
from .outer import EstimationResult, estimate, profile_objective
from .penalty import PenalizedResult, ScadPenalty, estimate_penalized, select_tau

__version__ = "0.1.0"

__all__ = [
    "BlockMoments", "BlockScheme", "block_moments", "make_scheme", "regime_scheme",
    "Dataset", "read_csv",
    "ConfigurationError", "DataError", "EstimationError", "GelError", "NumericalDomainError",
    "CovarianceEstimates", "TestReport", "confidence_interval", "covariances", "gel_ratio",
    "overid_test", "wilks_test",
    "MultiplierState", "SolverOptions", "implied_probabilities", "solve_lambda",
    "LinkFunction", "LinkKind", "make_link",
    "MomentModel", "model_logistic", "model_mean", "model_mean_unit_variance", "model_var_residual",
    "EstimationResult", "estimate", "profile_objective",
    "PenalizedResult", "ScadPenalty", "estimate_penalized", "select_tau",
]
