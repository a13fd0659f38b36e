"""Generalised likelihood profiles for models with intractable likelihoods.

The package fits loss-based point estimates, profiles the loss over interest
parameters, calibrates the likelihood-scale parameter delta by parametric
bootstrap so profile-threshold confidence sets reach a target coverage, and
validates that coverage on independent replicates.
"""

from .calibrate import (
    CalibrationConfig,
    CalibrationError,
    CalibrationResult,
    ConfidenceSet,
    CoverageReport,
    calibrate_delta,
    confidence_set,
    empirical_coverage_at,
    quantile_bootstrap_ci,
    validate_coverage,
    wilks_threshold,
    write_calibration_csv,
    write_calibration_json,
    write_coverage_csv,
)
from .core import (
    LossModel,
    ProfileCurve,
    evaluate_profile,
    fit_mgle,
    generalised_log_likelihood,
    profile_loss_at,
    read_profile_csv,
    write_profile_csv,
)
from .optim import OptimizerConfig, OptimResult, minimize_loss, reflect_into_box
from .space import InterestPartition, ParameterSpace, ProfileGrid
from .stats import RngStream, chi2_quantile, resample_with_replacement, split_stream
from . import models

__version__ = "0.1.0"

__all__ = [
    "CalibrationConfig",
    "CalibrationError",
    "CalibrationResult",
    "ConfidenceSet",
    "CoverageReport",
    "InterestPartition",
    "LossModel",
    "OptimResult",
    "OptimizerConfig",
    "ParameterSpace",
    "ProfileCurve",
    "ProfileGrid",
    "RngStream",
    "calibrate_delta",
    "chi2_quantile",
    "confidence_set",
    "empirical_coverage_at",
    "evaluate_profile",
    "fit_mgle",
    "generalised_log_likelihood",
    "minimize_loss",
    "models",
    "profile_loss_at",
    "quantile_bootstrap_ci",
    "read_profile_csv",
    "reflect_into_box",
    "resample_with_replacement",
    "split_stream",
    "validate_coverage",
    "wilks_threshold",
    "write_calibration_csv",
    "write_calibration_json",
    "write_coverage_csv",
    "write_profile_csv",
]
