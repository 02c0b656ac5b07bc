"""Moment functions f and weight matrices Omega for the moment-matching objective."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from wvcal.errors import DomainError, RankError

LN10 = math.log(10.0)


@dataclass(frozen=True)
class MomentFunction:
    """Elementwise map applied to both the empirical and the model variances."""

    kind: str

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "identity":
            return x
        if np.any(x <= 0):
            raise DomainError("log10 moments require strictly positive variances")
        return np.log10(x)

    def derivative(self, x) -> np.ndarray:
        """Diagonal of the Jacobian F evaluated at ``x``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "identity":
            return np.ones_like(x)
        if np.any(x <= 0):
            raise DomainError("log10 moments require strictly positive variances")
        return 1.0 / (x * LN10)

    def jacobian(self, x) -> np.ndarray:
        return np.diag(self.derivative(x))


IDENTITY = MomentFunction("identity")
LOG10 = MomentFunction("log10")


def moment_function(name) -> MomentFunction:
    if isinstance(name, MomentFunction):
        return name
    key = str(name).lower()
    if key in ("identity", "id", "x"):
        return IDENTITY
    if key in ("log10", "log"):
        return LOG10
    raise DomainError(f"unknown moment function {name!r}; use 'identity' or 'log10'")


class WeightStrategy(enum.Enum):
    IDENTITY = "identity"
    DIAG_INVERSE_SQUARED = "diag_inverse_squared"
    V_INVERSE = "v_inverse"
    OPTIMAL = "optimal"

    @classmethod
    def parse(cls, value) -> "WeightStrategy":
        if isinstance(value, WeightStrategy):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = [w.value for w in cls]
            raise DomainError(f"unknown weight strategy {value!r}; use one of {names}") from None


def check_spd(omega: np.ndarray, name: str = "weight matrix") -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    if omega.ndim != 2 or omega.shape[0] != omega.shape[1]:
        raise DomainError(f"{name} must be square, got shape {omega.shape}")
    if not np.allclose(omega, omega.T, rtol=1e-10, atol=0.0):
        raise DomainError(f"{name} must be symmetric")
    omega = 0.5 * (omega + omega.T)
    # eigenvalues relative to the diagonal scale; entries can span many decades
    diag = np.diag(omega)
    if not np.all(np.isfinite(diag) & (diag > 0)):
        raise DomainError(f"{name} must have a strictly positive diagonal")
    d = np.sqrt(diag)
    corr = omega / np.outer(d, d)
    lam = np.linalg.eigvalsh(corr)
    if lam[0] <= 1e-12 * lam.sum():
        raise DomainError(f"{name} is not positive definite (min eigenvalue {lam[0]:.3g})")
    return omega


def diag_inverse_squared(nu_hat, coeff_counts) -> np.ndarray:
    nu_hat = np.asarray(nu_hat, dtype=float)
    if np.any(nu_hat <= 0):
        raise DomainError("diag_inverse_squared weights need strictly positive variances")
    return np.diag(np.asarray(coeff_counts, dtype=float) / nu_hat**2)


def _spd_inverse(mat: np.ndarray, name: str) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    d = np.sqrt(np.diag(mat))
    if np.any(d <= 0):
        raise RankError(f"{name} has a non-positive diagonal and cannot be inverted")
    corr = mat / np.outer(d, d)
    try:
        chol = np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        raise RankError(f"{name} is singular or indefinite") from None
    inv_corr = np.linalg.inv(chol).T @ np.linalg.inv(chol)
    inv = inv_corr / np.outer(d, d)
    return 0.5 * (inv + inv.T)


def optimal_omega(f: MomentFunction, V_hat: np.ndarray, nu_at_theta) -> np.ndarray:
    """Efficient weight ``(F V F^T)^-1`` with F evaluated at ``nu_at_theta``."""
    F = f.jacobian(nu_at_theta)
    return _spd_inverse(F @ np.asarray(V_hat, dtype=float) @ F.T, "F V F^T")


def weight_matrix(strategy, est, f: MomentFunction = IDENTITY, V_hat=None, nu_at_theta=None) -> np.ndarray:
    strategy = WeightStrategy.parse(strategy)
    if strategy is WeightStrategy.IDENTITY:
        return np.eye(est.grid.J)
    if strategy is WeightStrategy.DIAG_INVERSE_SQUARED:
        return diag_inverse_squared(est.nu_hat, est.coeff_counts)
    V = V_hat if V_hat is not None else est.cov_hat
    if V is None:
        raise DomainError(f"weight strategy {strategy.value!r} needs a covariance estimate")
    if strategy is WeightStrategy.V_INVERSE:
        return check_spd(_spd_inverse(V, "V"))
    nu = est.nu_hat if nu_at_theta is None else nu_at_theta
    return check_spd(optimal_omega(f, V, nu))
