"""Identification-robust minimum-distance inference for structural models.

The test statistic is the ridge-profiled weighted distance between a
reduced-form estimate and the structural fixed-point map, weighted by the
truncated pseudoinverse of its sandwiched covariance.  Its null law is
chi-squared with degrees of freedom estimated from the data by eigenvalue
hard thresholding, so the test stays valid when nuisance parameters are
only partially identified.
"""

from .entrygame import GameParams, build_model, estimate_reduced_form, simulate_data
from .inference import (
    CiResult,
    ReducedFormEstimate,
    RobustTestResult,
    TestOptions,
    TTestResult,
    invert_ci,
    oracle_test,
    robust_test,
    t_test,
)
from .linalg import estimate_rank, quadratic_form, sym_eig, truncated_pinv
from .model import ModelDims, SmmAdapter, StructuralModel, make_model
from .power import (
    PowerReport,
    local_power,
    max_power_direction,
    nuisance_projected_weight,
    power_report,
    trivial_power_dim,
)
from .solver import RidgeSolution, minimize_ridge, select_lambda_gcv

__version__ = "0.1.0"

__all__ = [
    "CiResult",
    "GameParams",
    "ModelDims",
    "PowerReport",
    "ReducedFormEstimate",
    "RidgeSolution",
    "RobustTestResult",
    "SmmAdapter",
    "StructuralModel",
    "TTestResult",
    "TestOptions",
    "build_model",
    "estimate_rank",
    "estimate_reduced_form",
    "invert_ci",
    "local_power",
    "make_model",
    "max_power_direction",
    "minimize_ridge",
    "nuisance_projected_weight",
    "oracle_test",
    "power_report",
    "quadratic_form",
    "robust_test",
    "select_lambda_gcv",
    "simulate_data",
    "sym_eig",
    "t_test",
    "trivial_power_dim",
    "truncated_pinv",
]
