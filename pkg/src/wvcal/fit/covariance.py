"""Sandwich covariance of moment-matching estimators."""

from __future__ import annotations

import numpy as np

from wvcal.errors import RankError
from wvcal.fit.moments import MomentFunction
from wvcal.model import CompositeModel, ScaleGrid, model_wv, wv_jacobian


def sandwich_covariance(A, F, omega, V) -> np.ndarray:
    """``B V B^T`` with ``B = H^-1 A^T Omega*``, ``Omega* = F^T Omega F``, ``H = A^T Omega* A``.

    ``V`` is the covariance of the variance estimates, so the result is the
    finite-sample covariance of the parameter estimates.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    F = np.atleast_2d(np.asarray(F, dtype=float))
    omega = np.asarray(omega, dtype=float)
    V = np.asarray(V, dtype=float)
    omega_star = F.T @ omega @ F
    # column scaling keeps H well conditioned when parameters span many decades
    scale = np.linalg.norm(A, axis=0)
    if np.any(scale == 0):
        raise RankError("model Jacobian has an all-zero column; add scales or drop the process")
    As = A / scale
    H = As.T @ omega_star @ As
    try:
        cond = np.linalg.cond(H)
    except np.linalg.LinAlgError:
        cond = np.inf
    if not np.isfinite(cond) or cond > 1e15:
        raise RankError(
            "sandwich bread H is singular; use more scales or a different weight matrix"
        )
    Bs = np.linalg.solve(H, As.T @ omega_star)
    cov = Bs @ V @ Bs.T / np.outer(scale, scale)
    return 0.5 * (cov + cov.T)


def asymptotic_covariance(
    theta: CompositeModel,
    f: MomentFunction,
    omega,
    V_hat,
    convention,
    grid: ScaleGrid,
) -> tuple[np.ndarray, np.ndarray]:
    """Covariance and standard errors of ``theta`` at the fitted point."""
    A = wv_jacobian(theta, convention, grid)
    F = f.jacobian(model_wv(theta, convention, grid))
    cov = sandwich_covariance(A, F, omega, V_hat)
    return cov, np.sqrt(np.clip(np.diag(cov), 0.0, None))
