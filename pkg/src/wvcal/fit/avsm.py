"""Automated Allan-variance slope method.

Each process dominates the log-log Allan variance plot over some range of
scales where the curve follows a characteristic slope. The method looks for
the longest contiguous run of levels whose local slope is close to that
value and reads the parameter off the average intercept of the run.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from wvcal.errors import IdentifiabilityError
from wvcal.fit.moments import IDENTITY, diag_inverse_squared
from wvcal.fit.gmwfm import moment_distance
from wvcal.fit.result import FitResult
from wvcal.model import PROCESSES, CompositeModel, _canonical, design_matrix, h_inverse, model_wv
from wvcal.wv import WvEstimate

# slope of log nu against log half-window
CHARACTERISTIC_SLOPES = {"QN": -2.0, "WN": -1.0, "BI": 0.0, "RW": 1.0, "DR": 2.0}
SLOPE_TOLERANCE = 0.35
_PREFER_LONG_SCALES = frozenset({"RW", "DR"})


def local_slopes(est: WvEstimate) -> np.ndarray:
    """Slopes between consecutive levels; NaN where a variance is zero."""
    nu = est.nu_hat
    j = np.asarray(est.levels, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(nu > 0, np.log2(np.where(nu > 0, nu, 1.0)), np.nan)
    return np.diff(logs) / np.diff(j)


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of True as half-open segment index ranges."""
    runs, start = [], None
    for i, ok in enumerate(mask):
        if ok and start is None:
            start = i
        elif not ok and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(mask)))
    return runs


def select_region(slopes: np.ndarray, process: str, tolerance: float = SLOPE_TOLERANCE, min_levels: int = 2):
    """Level index range ``(first, last_exclusive)`` assigned to ``process`` or None."""
    target = CHARACTERISTIC_SLOPES[process]
    with np.errstate(invalid="ignore"):
        mask = np.abs(slopes - target) <= tolerance
    candidates = [(a, b + 1) for a, b in _runs(mask) if b + 1 - a >= min_levels]
    if not candidates:
        return None
    longest = max(b - a for a, b in candidates)
    tied = [c for c in candidates if c[1] - c[0] == longest]
    return tied[-1] if process in _PREFER_LONG_SCALES else tied[0]


def fit_avsm(
    est: WvEstimate,
    active: Sequence[str],
    tolerance: float = SLOPE_TOLERANCE,
    min_levels: int = 2,
) -> FitResult:
    active = _canonical(active)
    slopes = local_slopes(est)
    counts = est.coeff_counts.astype(float)
    X = design_matrix(PROCESSES, est.convention, est.grid)
    estimates, failures, regions = {}, {}, {}
    for proc in active:
        region = select_region(slopes, proc, tolerance, min_levels)
        if region is None:
            failures[proc] = (
                f"no run of >= {min_levels} levels with slope within "
                f"{tolerance} of {CHARACTERISTIC_SLOPES[proc]:+g}"
            )
            continue
        a, b = region
        col = X[a:b, PROCESSES.index(proc)]
        log_terms = np.log(est.nu_hat[a:b]) - np.log(col)
        vartheta = float(np.exp(np.average(log_terms, weights=counts[a:b])))
        estimates[proc] = h_inverse([vartheta], [proc])[proc]
        regions[proc] = [est.levels[a], est.levels[b - 1]]
    if not estimates:
        raise IdentifiabilityError(f"slope method found no region for any of {list(active)}")
    theta = CompositeModel(estimates)
    fitted = model_wv(theta, est.convention, est.grid)
    positive = est.nu_hat > 0
    objective = float("nan")
    if np.all(positive):
        omega = diag_inverse_squared(est.nu_hat, counts)
        objective = moment_distance(est.nu_hat, fitted, IDENTITY, omega)
    notes = tuple(f"{k} region levels {v[0]}-{v[1]}" for k, v in regions.items())
    return FitResult(
        theta_hat=theta,
        objective=objective,
        fitted_wv=fitted,
        estimate=est,
        method={"f": "identity", "omega": "none", "solver": "avsm"},
        converged=not failures,
        iterations=0,
        failures=failures,
        notes=notes,
    )
