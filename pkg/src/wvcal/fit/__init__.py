from wvcal.fit.avsm import fit_avsm
from wvcal.fit.bias import BiasProbe, moment_bias_probe
from wvcal.fit.covariance import asymptotic_covariance, sandwich_covariance
from wvcal.fit.gmwfm import (
    fit_armav,
    fit_closed_form,
    fit_gmwm,
    fit_iterative,
    gmwfm_objective,
    moment_distance,
)
from wvcal.fit.moments import (
    IDENTITY,
    LOG10,
    MomentFunction,
    WeightStrategy,
    moment_function,
    optimal_omega,
    weight_matrix,
)
from wvcal.fit.result import FitResult

__all__ = [
    "BiasProbe",
    "FitResult",
    "IDENTITY",
    "LOG10",
    "MomentFunction",
    "WeightStrategy",
    "asymptotic_covariance",
    "fit_armav",
    "fit_avsm",
    "fit_closed_form",
    "fit_gmwm",
    "fit_iterative",
    "gmwfm_objective",
    "moment_bias_probe",
    "moment_distance",
    "moment_function",
    "optimal_omega",
    "sandwich_covariance",
    "weight_matrix",
]
