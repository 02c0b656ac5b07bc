"""Empirical overlapped Allan variance and Haar wavelet variance.

Both estimators share one pass per level: with half-window ``m = 2^j`` the
gap between consecutive window means starting at ``t`` is

    d_t = (sum(x[t+m : t+2m]) - sum(x[t : t+m])) / m

which equals the windowed sum of the lag-``m`` differences ``x[s+m] - x[s]``.
Summing lag differences (rather than raw prefix sums) keeps the computation
free of large offsets, so drifting or wandering signals lose no precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import stats

from wvcal.errors import DomainError, ScaleError
from wvcal.model import Convention, ScaleGrid

DEFAULT_BOOTSTRAP_RESAMPLES = 200
MIN_BOOTSTRAP_FACTOR = 64  # T >= 64 * 2^J


@dataclass(frozen=True)
class Signal:
    values: np.ndarray
    sample_rate_hz: float = 1.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise DomainError("signal must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise DomainError(f"signal value at index {bad} is not finite")
        if not (math.isfinite(self.sample_rate_hz) and self.sample_rate_hz > 0):
            raise DomainError(f"sample rate must be positive, got {self.sample_rate_hz!r}")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    @property
    def T(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class WvEstimate:
    grid: ScaleGrid
    nu_hat: np.ndarray
    convention: Convention = Convention.AV
    cov_hat: Optional[np.ndarray] = None
    ci_lo: Optional[np.ndarray] = None
    ci_hi: Optional[np.ndarray] = None
    sample_rate_hz: float = 1.0

    def __post_init__(self):
        nu = np.asarray(self.nu_hat, dtype=float)
        if nu.shape != (self.grid.J,):
            raise DomainError(f"nu_hat has shape {nu.shape}, grid has {self.grid.J} levels")
        if np.any(nu < 0) or not np.all(np.isfinite(nu)):
            raise DomainError("nu_hat must be finite and non-negative")
        object.__setattr__(self, "nu_hat", nu)
        object.__setattr__(self, "convention", Convention.parse(self.convention))
        if self.cov_hat is not None:
            cov = np.asarray(self.cov_hat, dtype=float)
            if cov.shape != (self.grid.J, self.grid.J):
                raise DomainError(f"cov_hat has shape {cov.shape}")
            if not np.allclose(cov, cov.T, rtol=1e-12, atol=0.0):
                raise DomainError("cov_hat must be symmetric")
            if np.any(np.diag(cov) < 0):
                raise DomainError("cov_hat must have a non-negative diagonal")
            object.__setattr__(self, "cov_hat", cov)

    @property
    def levels(self) -> tuple[int, ...]:
        return self.grid.levels

    @property
    def coeff_counts(self) -> np.ndarray:
        return self.grid.coeff_counts

    @property
    def taus(self) -> np.ndarray:
        return self.grid.taus(self.sample_rate_hz)


def _as_signal(signal) -> Signal:
    return signal if isinstance(signal, Signal) else Signal(np.asarray(signal, dtype=float))


def _window_gaps(x: np.ndarray, m: int) -> np.ndarray:
    lag = x[m:] - x[:-m]
    csum = np.concatenate(([0.0], np.cumsum(lag)))
    return (csum[m:] - csum[:-m]) / m


def level_contributions(x: np.ndarray, m: int) -> np.ndarray:
    """Per-coefficient terms whose mean is the Allan variance at half-window ``m``."""
    gaps = _window_gaps(x, m)
    return 0.5 * gaps * gaps


def _resolve_grid(sig: Signal, grid: Optional[ScaleGrid]) -> ScaleGrid:
    if grid is None:
        return ScaleGrid.default(sig.T)
    if grid.T != sig.T:
        # re-validate the requested levels against this signal
        return ScaleGrid(grid.levels, sig.T)
    return grid


def allan_variance(signal, grid: Optional[ScaleGrid] = None) -> WvEstimate:
    """Overlapped Allan variance at every level of ``grid``."""
    sig = _as_signal(signal)
    grid = _resolve_grid(sig, grid)
    x = sig.values
    nu = np.empty(grid.J)
    for i, m in enumerate(grid.half_windows):
        nu[i] = level_contributions(x, int(m)).mean()
    return WvEstimate(grid, nu, Convention.AV, sample_rate_hz=sig.sample_rate_hz)


def haar_wv(signal, grid: Optional[ScaleGrid] = None) -> WvEstimate:
    av = allan_variance(signal, grid)
    return replace(av, nu_hat=av.nu_hat / 2.0, convention=Convention.WV)


def estimate_wv(signal, grid: Optional[ScaleGrid] = None, convention="av") -> WvEstimate:
    if Convention.parse(convention) is Convention.AV:
        return allan_variance(signal, grid)
    return haar_wv(signal, grid)


def diagonal_covariance(nu_hat, coeff_counts) -> np.ndarray:
    """Large-sample Gaussian approximation ``diag(2 nu_j^2 / N_j)``."""
    nu_hat = np.asarray(nu_hat, dtype=float)
    return np.diag(2.0 * nu_hat**2 / np.asarray(coeff_counts, dtype=float))


def edof_covariance(nu, grid: ScaleGrid) -> np.ndarray:
    """Diagonal ``2 nu_j^2 / eta_j`` with ``eta_j = max(1.5 N_j / 2^j, 1)``.

    ``eta_j`` is the effective number of independent squared gaps: neighbouring
    overlapped coefficients share samples, and for white noise the exact
    large-sample variance of the estimator is ``(4/3) nu_j^2 2^j / N_j``.
    """
    nu = np.asarray(nu, dtype=float)
    eta = np.maximum(1.5 * grid.coeff_counts / grid.half_windows, 1.0)
    return np.diag(2.0 * nu**2 / eta)


def bootstrap_min_length(grid: ScaleGrid) -> int:
    return MIN_BOOTSTRAP_FACTOR * 2 ** max(grid.levels)


def _bootstrap_one(contrib, n_common, block, n_blocks, rng):
    starts = rng.integers(0, n_common - block + 1, size=n_blocks)
    idx = (starts[:, None] + np.arange(block)[None, :]).ravel()[:n_common]
    return np.array([c[idx].mean() for c in contrib])


def block_bootstrap_covariance(
    signal,
    grid: ScaleGrid,
    convention="av",
    resamples: int = DEFAULT_BOOTSTRAP_RESAMPLES,
    block_length: Optional[int] = None,
    seed: int = 0,
) -> np.ndarray:
    """Moving-block bootstrap covariance of the per-level variance estimates.

    Blocks are drawn jointly for all levels from the per-coefficient terms on
    the index range every level shares, so cross-level dependence survives the
    resampling and no artificial jumps are spliced into the signal. The
    covariance of the resampled means is rescaled from that common range to
    each level's own coefficient count.
    """
    sig = _as_signal(signal)
    grid = _resolve_grid(sig, grid)
    need = bootstrap_min_length(grid)
    if sig.T < need:
        raise ScaleError(
            f"block bootstrap up to level {max(grid.levels)} needs T >= {need} samples, "
            f"signal has {sig.T}; use the diagonal method or fewer levels"
        )
    if resamples < 2:
        raise DomainError("bootstrap needs at least 2 resamples")
    c = Convention.parse(convention).c
    block = block_length or 2 ** (max(grid.levels) + 2)
    counts = grid.coeff_counts.astype(float)
    n_common = int(counts.min())
    if block > n_common:
        raise ScaleError(f"block length {block} exceeds the {n_common} shared coefficients")
    contrib = [c * level_contributions(sig.values, int(m))[:n_common] for m in grid.half_windows]
    n_blocks = -(-n_common // block)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    draws = np.array([_bootstrap_one(contrib, n_common, block, n_blocks, rng) for _ in range(resamples)])
    cov = np.cov(draws, rowvar=False, ddof=1).reshape(grid.J, grid.J)
    scale = np.sqrt(n_common / counts)
    cov = cov * np.outer(scale, scale)
    return 0.5 * (cov + cov.T)


def wv_covariance(
    signal,
    grid: Optional[ScaleGrid] = None,
    method: str = "auto",
    convention="av",
    resamples: int = DEFAULT_BOOTSTRAP_RESAMPLES,
    seed: int = 0,
    estimate: Optional[WvEstimate] = None,
) -> np.ndarray:
    """Covariance matrix of the variance estimates.

    ``method`` is one of ``"block_bootstrap"``, ``"diagonal_large_sample"``
    (``2 nu_j^2 / N_j``), ``"diagonal_edof"`` or ``"auto"`` (bootstrap when
    the signal is long enough, ``diagonal_edof`` otherwise).
    """
    sig = _as_signal(signal)
    grid = _resolve_grid(sig, grid)
    aliases = {"bootstrap": "block_bootstrap", "diag": "diagonal_large_sample", "edof": "diagonal_edof"}
    method = aliases.get(method, method)
    if method == "auto":
        method = "block_bootstrap" if sig.T >= bootstrap_min_length(grid) else "diagonal_edof"
    if method == "block_bootstrap":
        return block_bootstrap_covariance(sig, grid, convention, resamples=resamples, seed=seed)
    if method in ("diagonal_large_sample", "diagonal_edof"):
        if estimate is None:
            estimate = estimate_wv(sig, grid, convention)
        if method == "diagonal_edof":
            return edof_covariance(estimate.nu_hat, grid)
        return diagonal_covariance(estimate.nu_hat, grid.coeff_counts)
    raise DomainError(f"unknown covariance method {method!r}")


def with_covariance(est: WvEstimate, cov: np.ndarray) -> WvEstimate:
    return replace(est, cov_hat=cov)


def wv_confidence(est: WvEstimate, level: float = 0.95) -> WvEstimate:
    """Gaussian intervals ``nu_hat +/- z * sd``, lower bound clamped at zero."""
    if est.cov_hat is None:
        raise DomainError("confidence intervals need a covariance estimate (cov_hat)")
    if not 0.0 <= level < 1.0:
        raise DomainError(f"confidence level must lie in [0, 1), got {level}")
    z = stats.norm.ppf(0.5 + level / 2.0)
    half = z * np.sqrt(np.diag(est.cov_hat))
    lo = np.maximum(est.nu_hat - half, 0.0)
    hi = est.nu_hat + half
    return replace(est, ci_lo=lo, ci_hi=hi)


