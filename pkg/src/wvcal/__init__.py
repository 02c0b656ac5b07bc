"""Inertial sensor noise calibration by moment matching on the Allan variance.

The composite error model sums quantization noise (QN), white noise (WN),
bias instability (BI), random walk (RW) and drift (DR). Parameters are fitted
by minimizing a weighted distance between a function of the empirical Allan
(or Haar wavelet) variance and its model-implied counterpart.
"""

from wvcal.errors import (
    DomainError,
    IdentifiabilityError,
    InputFormatError,
    RankError,
    ScaleError,
    UnsupportedProcessError,
    WvcalError,
)
from wvcal.fit import (
    IDENTITY,
    LOG10,
    FitResult,
    WeightStrategy,
    asymptotic_covariance,
    fit_armav,
    fit_avsm,
    fit_closed_form,
    fit_gmwm,
    fit_iterative,
    gmwfm_objective,
    moment_bias_probe,
    sandwich_covariance,
)
from wvcal.model import CompositeModel, Convention, ScaleGrid, design_matrix, model_wv, wv_jacobian
from wvcal.simulate import SimConfig, simulate, simulate_components
from wvcal.units import PhysicalModel, UnitSpec, convert_units, table_i_model
from wvcal.wv import (
    Signal,
    WvEstimate,
    allan_variance,
    estimate_wv,
    haar_wv,
    wv_confidence,
    wv_covariance,
)

__version__ = "0.1.0"

__all__ = [
    "IDENTITY",
    "LOG10",
    "CompositeModel",
    "Convention",
    "DomainError",
    "FitResult",
    "IdentifiabilityError",
    "InputFormatError",
    "PhysicalModel",
    "RankError",
    "ScaleError",
    "ScaleGrid",
    "Signal",
    "SimConfig",
    "UnitSpec",
    "UnsupportedProcessError",
    "WeightStrategy",
    "WvEstimate",
    "WvcalError",
    "allan_variance",
    "asymptotic_covariance",
    "convert_units",
    "design_matrix",
    "estimate_wv",
    "fit_armav",
    "fit_avsm",
    "fit_closed_form",
    "fit_gmwm",
    "fit_iterative",
    "gmwfm_objective",
    "haar_wv",
    "model_wv",
    "moment_bias_probe",
    "sandwich_covariance",
    "simulate",
    "simulate_components",
    "table_i_model",
    "wv_confidence",
    "wv_covariance",
    "wv_jacobian",
]
