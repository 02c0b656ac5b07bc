from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from wvcal.model import PARAMETER_NAMES, CompositeModel
from wvcal.wv import WvEstimate


@dataclass(frozen=True)
class FitResult:
    """Outcome of one calibration fit.

    ``asymptotic_cov`` is the covariance of ``theta_hat`` itself (the
    asymptotic sandwich divided by the coefficient count it was scaled with),
    so ``std_errors`` are directly comparable to the estimates.
    """

    theta_hat: Optional[CompositeModel]
    objective: float
    fitted_wv: Optional[np.ndarray]
    estimate: WvEstimate
    method: dict
    converged: bool = True
    iterations: int = 0
    asymptotic_cov: Optional[np.ndarray] = None
    std_errors: Optional[np.ndarray] = None
    projected: tuple[str, ...] = ()
    failures: dict = field(default_factory=dict)
    notes: tuple[str, ...] = ()

    def to_report(self) -> dict:
        theta = {}
        se = {}
        if self.theta_hat is not None:
            for i, (proc, value) in enumerate(self.theta_hat.params.items()):
                theta[proc] = {PARAMETER_NAMES[proc]: value}
                if self.std_errors is not None:
                    se[proc] = {PARAMETER_NAMES[proc]: float(self.std_errors[i])}
        scales = []
        for i, level in enumerate(self.estimate.levels):
            scales.append(
                {
                    "level": level,
                    "nu_hat": float(self.estimate.nu_hat[i]),
                    "fitted": None if self.fitted_wv is None else float(self.fitted_wv[i]),
                }
            )
        report = {
            "method": dict(self.method),
            "theta_hat": theta,
            "std_errors": se or None,
            "objective": float(self.objective),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "scales": scales,
            "units": "per-sample",
            "convention": self.estimate.convention.value,
        }
        if self.projected:
            report["projected"] = list(self.projected)
        if self.failures:
            report["failures"] = dict(self.failures)
        if self.notes:
            report["notes"] = list(self.notes)
        return report
