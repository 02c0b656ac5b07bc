"""Moment-matching estimators on the (functional) wavelet variance.

``theta_hat = argmin || f(nu_hat) - f(nu(theta)) ||^2_Omega``

With ``f`` the identity the model is linear in ``h(theta)`` and the minimizer
is a weighted least-squares solve followed by ``h^-1``; any other ``f`` goes
through the iterative solver, which works on ``log(theta)`` so positivity
holds throughout.
"""

from __future__ import annotations

from typing import Optional, Sequence, Union

import numpy as np
from scipy import optimize

from wvcal.errors import DomainError, RankError
from wvcal.fit.covariance import asymptotic_covariance
from wvcal.fit.moments import (
    IDENTITY,
    LOG10,
    MomentFunction,
    WeightStrategy,
    check_spd,
    diag_inverse_squared,
    moment_function,
    optimal_omega,
    weight_matrix,
)
from wvcal.fit.result import FitResult
from wvcal.model import (
    PARAMETER_NAMES,
    CompositeModel,
    _canonical,
    design_matrix,
    h_inverse,
    model_wv,
    wv_jacobian,
)
from wvcal.wv import WvEstimate, edof_covariance

POSITIVITY_FLOOR = 1e-12
MAX_ITER = 500
GRADIENT_TOL = 1e-9
RANK_TOL = 1e-12
START_LIFT = 1e-2  # clamped start components restart at 1% of the empirical variance
BOUND_TOL = 1e-6
REFINE_STEPS = 5
MAX_REFINE_STEP = 1e-3  # in log(theta); refinement is a local polish only

OmegaLike = Union[np.ndarray, str, WeightStrategy, None]


def moment_distance(nu_hat, nu_model, f: MomentFunction, omega) -> float:
    r = f.apply(nu_hat) - f.apply(nu_model)
    return float(r @ np.asarray(omega, dtype=float) @ r)


def gmwfm_objective(theta: CompositeModel, est: WvEstimate, f: MomentFunction, omega) -> float:
    return moment_distance(est.nu_hat, model_wv(theta, est.convention, est.grid), f, omega)


def _resolve_omega(omega: OmegaLike, est: WvEstimate, f: MomentFunction) -> tuple[np.ndarray, str]:
    if omega is None:
        omega = WeightStrategy.DIAG_INVERSE_SQUARED
    if isinstance(omega, (str, WeightStrategy)):
        strategy = WeightStrategy.parse(omega)
        return weight_matrix(strategy, est, f), strategy.value
    return check_spd(omega), "custom"


def _root_factor(omega: np.ndarray) -> np.ndarray:
    """Upper factor ``U`` with ``omega = U^T U``, robust to wide diagonal ranges."""
    d = np.sqrt(np.diag(omega))
    chol = np.linalg.cholesky(omega / np.outer(d, d))
    return chol.T * d[None, :]


def _check_scales(active, est):
    if est.grid.J < len(active):
        raise RankError(
            f"{len(active)} parameters need at least as many scales, grid has {est.grid.J}"
        )


def _wls(Xw: np.ndarray, yw: np.ndarray, names: Sequence[str]) -> np.ndarray:
    scale = np.linalg.norm(Xw, axis=0)
    if np.any(scale == 0):
        dead = [n for n, s in zip(names, scale) if s == 0]
        raise RankError(f"design columns {dead} are identically zero")
    Z = Xw / scale
    _, sv, vt = np.linalg.svd(Z, full_matrices=False)
    if sv[-1] <= RANK_TOL * sv[0]:
        null = np.abs(vt[-1])
        deficient = [n for n, w in zip(names, null) if w > 0.1 * null.max()]
        raise RankError(f"X^T Omega X is singular; columns {deficient} are not separable on this grid")
    z, *_ = np.linalg.lstsq(Z, yw, rcond=None)
    return z / scale


def _positivity_floor(X: np.ndarray, nu_hat: np.ndarray) -> np.ndarray:
    # smallest value a component may take: it contributes at most
    # POSITIVITY_FLOOR of the empirical variance at every level
    pos = nu_hat > 0
    if not np.any(pos):
        raise DomainError("empirical variance is zero at every level; nothing to fit")
    return POSITIVITY_FLOOR * np.min(nu_hat[pos, None] / X[pos, :], axis=0)


def closed_form_vartheta(X, omega, nu_hat, names) -> tuple[np.ndarray, tuple[str, ...]]:
    """Weighted least squares for ``h(theta)`` with non-positive components clamped."""
    U = _root_factor(omega)
    Xw = U @ X
    yw = U @ nu_hat
    p = X.shape[1]
    floor = _positivity_floor(X, nu_hat)
    fixed = np.zeros(p, dtype=bool)
    vartheta = np.empty(p)
    while True:
        free = ~fixed
        vartheta[fixed] = floor[fixed]
        if not np.any(free):
            break
        target = yw - Xw[:, fixed] @ floor[fixed]
        names_free = [n for n, f in zip(names, free) if f]
        vartheta[free] = _wls(Xw[:, free], target, names_free)
        bad = free & (vartheta <= 0)
        if not np.any(bad):
            break
        fixed |= bad
    projected = tuple(n for n, f in zip(names, fixed) if f)
    return vartheta, projected


def _with_covariance(result_kwargs, theta, f, omega, V_hat, est):
    notes = list(result_kwargs.pop("notes", ()))
    if V_hat is None:
        V_hat = est.cov_hat
    if V_hat is None:
        V_hat = edof_covariance(model_wv(theta, est.convention, est.grid), est.grid)
    try:
        cov, se = asymptotic_covariance(theta, f, omega, V_hat, est.convention, est.grid)
    except RankError as exc:
        cov, se = None, None
        notes.append(f"covariance unavailable: {exc}")
    return dict(result_kwargs, asymptotic_cov=cov, std_errors=se, notes=tuple(notes))


def fit_closed_form(
    est: WvEstimate,
    active: Sequence[str],
    omega: OmegaLike = None,
    V_hat: Optional[np.ndarray] = None,
) -> FitResult:
    """Identity-moment estimator solved as weighted least squares in ``h(theta)``."""
    active = _canonical(active)
    _check_scales(active, est)
    omega, label = _resolve_omega(omega, est, IDENTITY)
    X = design_matrix(active, est.convention, est.grid)
    vartheta, projected = closed_form_vartheta(X, omega, est.nu_hat, active)
    theta = h_inverse(vartheta, active)
    fitted = model_wv(theta, est.convention, est.grid)
    notes = ()
    if projected:
        notes = (f"non-positive solution clamped to the positivity floor for {list(projected)}",)
    kwargs = dict(
        theta_hat=theta,
        objective=moment_distance(est.nu_hat, fitted, IDENTITY, omega),
        fitted_wv=fitted,
        estimate=est,
        method={"f": "identity", "omega": label, "solver": "closed_form"},
        converged=True,
        iterations=0,
        projected=projected,
        notes=notes,
    )
    return FitResult(**_with_covariance(kwargs, theta, IDENTITY, omega, V_hat, est))


def _objective_scale(nu_hat, f, U):
    # objective value of a 100% relative perturbation of nu_hat
    return float(np.sum((U @ (f.derivative(nu_hat) * nu_hat)) ** 2))


def _start_for(est, active, f, omega):
    if f is IDENTITY:
        return fit_closed_form(est, active, omega).theta_hat
    # identity-moment problem with the locally equivalent weight F^T Omega F
    F = f.derivative(est.nu_hat)
    omega_star = omega * np.outer(F, F)
    return fit_closed_form(est, active, omega_star).theta_hat


def fit_iterative(
    est: WvEstimate,
    template: Union[CompositeModel, Sequence[str]],
    f: Union[MomentFunction, str] = IDENTITY,
    omega: OmegaLike = None,
    start: Optional[CompositeModel] = None,
    max_iter: int = MAX_ITER,
    gtol: float = GRADIENT_TOL,
    V_hat: Optional[np.ndarray] = None,
) -> FitResult:
    """Minimize the moment distance over ``log(theta)``.

    The residual vector ``U (f(nu_hat) - f(nu(theta)))`` with ``Omega = U^T U``
    is handed to a trust-region Gauss-Newton solver with its analytic Jacobian.
    Convergence means the gradient of the normalized objective has sup-norm
    below ``gtol * (1 + objective)``.
    """
    f = moment_function(f)
    if isinstance(template, CompositeModel):
        active = template.active
        start = start or template
    else:
        active = _canonical(template)
    _check_scales(active, est)
    omega, label = _resolve_omega(omega, est, f)
    if start is None:
        start = _start_for(est, active, f, omega)
    if start.active != active:
        raise DomainError(f"start model processes {start.active} differ from {active}")
    U = _root_factor(omega)
    target = f.apply(est.nu_hat)
    scale = np.sqrt(_objective_scale(est.nu_hat, f, U))
    conv, grid = est.convention, est.grid

    def residual(phi):
        theta = CompositeModel.from_vector(active, np.exp(phi))
        return U @ (target - f.apply(model_wv(theta, conv, grid))) / scale

    def jac(phi):
        theta_v = np.exp(phi)
        theta = CompositeModel.from_vector(active, theta_v)
        nu = model_wv(theta, conv, grid)
        A = wv_jacobian(theta, conv, grid)
        return -(U @ (f.derivative(nu)[:, None] * A * theta_v[None, :])) / scale

    # same relative floor as the closed form; components that end on it are
    # reported as projected instead of being driven towards log(0)
    X = design_matrix(active, conv, grid)
    floor_h = _positivity_floor(X, est.nu_hat)
    lower = np.log(h_inverse(floor_h, active).vector())
    lift = np.log(h_inverse(START_LIFT / POSITIVITY_FLOOR * floor_h, active).vector())
    phi0 = np.log(start.vector())
    phi0 = np.where(phi0 < lower + np.log(10.0), np.maximum(lift, lower + 1.0), phi0)
    eps = np.finfo(float).eps
    sol = optimize.least_squares(
        residual,
        phi0,
        jac=jac,
        bounds=(lower, np.inf),
        method="trf",
        ftol=eps,
        xtol=eps,
        gtol=eps,
        max_nfev=max_iter,
    )
    phi = np.maximum(sol.x, lower)
    nfev = int(sol.nfev)
    at_floor = phi <= lower + BOUND_TOL
    if np.any(at_floor) and not np.all(at_floor):
        # polish the free components with the floored ones held fixed;
        # the reflective bound handling stalls short of tight tolerances
        free = ~at_floor
        phi[at_floor] = lower[at_floor]

        def sub_residual(z):
            full = phi.copy()
            full[free] = z
            return residual(full)

        def sub_jac(z):
            full = phi.copy()
            full[free] = z
            return jac(full)[:, free]

        polish = optimize.least_squares(
            sub_residual, phi[free], jac=sub_jac, method="trf",
            ftol=eps, xtol=eps, gtol=eps, max_nfev=max_iter,
        )
        phi[free] = polish.x
        nfev += int(polish.nfev)
    at_floor = phi <= lower + BOUND_TOL
    phi = _refine(phi, ~at_floor, residual, jac)
    r = residual(phi)
    grad = 2.0 * jac(phi).T @ r
    # on the floor only a negative gradient (objective falls as theta grows) counts
    grad = np.where(at_floor, np.minimum(grad, 0.0), grad)
    norm_obj = float(r @ r)
    converged = bool(np.all(np.isfinite(phi)) and np.max(np.abs(grad)) < gtol * (1.0 + norm_obj))
    theta = CompositeModel.from_vector(active, np.exp(np.where(at_floor, lower, phi)))
    projected = tuple(k for k, b in zip(active, at_floor) if b)
    fitted = model_wv(theta, conv, grid)
    notes = ()
    if projected:
        notes = (f"solution on the positivity floor for {list(projected)}",)
    kwargs = dict(
        theta_hat=theta,
        objective=moment_distance(est.nu_hat, fitted, f, omega),
        fitted_wv=fitted,
        estimate=est,
        method={"f": f.kind, "omega": label, "solver": "iterative"},
        converged=converged,
        iterations=nfev,
        projected=projected,
        notes=notes,
    )
    return FitResult(**_with_covariance(kwargs, theta, f, omega, V_hat, est))


def _refine(phi, free, residual, jac, steps: int = REFINE_STEPS):
    """Gauss-Newton steps judged by the analytic gradient alone.

    Near the optimum the achievable decrease of the objective drops below its
    own round-off, so trust-region solvers stop on the step tolerance while the
    (accurately computed) gradient is still resolvable.
    """
    if not np.any(free):
        return phi

    def gnorm(x):
        return np.max(np.abs(jac(x)[:, free].T @ residual(x)))

    best = gnorm(phi)
    for _ in range(steps):
        J = jac(phi)[:, free]
        step, *_ = np.linalg.lstsq(J, -residual(phi), rcond=None)
        if not np.max(np.abs(step)) < MAX_REFINE_STEP:
            break
        trial = phi.copy()
        trial[free] += step
        try:
            g = gnorm(trial)
        except DomainError:
            break
        if not np.isfinite(g) or g >= best:
            break
        phi, best = trial, g
    return phi


def fit_gmwm(
    est: WvEstimate,
    active: Sequence[str],
    V_hat: Optional[np.ndarray] = None,
) -> FitResult:
    """Two-step identity-moment estimator.

    Step one weights each level by ``N_j / nu_hat_j^2``. Step two re-solves
    with ``Omega = V^-1``, where ``V`` is ``V_hat`` (or the estimate's own
    covariance) when given, else the effective-dof diagonal evaluated at the
    step-one fitted variances rather than at the noisy ``nu_hat``.
    """
    active = _canonical(active)
    first = fit_closed_form(est, active, WeightStrategy.DIAG_INVERSE_SQUARED, V_hat=V_hat)
    V = V_hat if V_hat is not None else est.cov_hat
    if V is None:
        V = edof_covariance(first.fitted_wv, est.grid)
    omega = check_spd(optimal_omega(IDENTITY, V, est.nu_hat))
    second = fit_closed_form(est, active, omega, V_hat=V)
    method = {"f": "identity", "omega": "optimal", "solver": "two_step_closed_form"}
    return _replace_method(second, method)


def fit_armav(est: WvEstimate, active: Sequence[str], **options) -> FitResult:
    """Log10-moment estimator with ``N_j / nu_hat_j^2`` weights.

    The weight choice stands in for the unpublished matrix of the original
    log-regression method and is flagged in the result notes.
    """
    omega = diag_inverse_squared(est.nu_hat, est.coeff_counts)
    res = fit_iterative(est, active, LOG10, omega, **options)
    method = {"f": "log10", "omega": "diag_inverse_squared", "solver": "iterative"}
    note = "log10 weight matrix is a diag(N/nu_hat^2) stand-in"
    return _replace_method(res, method, note)


def _replace_method(res: FitResult, method: dict, note: Optional[str] = None) -> FitResult:
    from dataclasses import replace

    notes = res.notes + ((note,) if note else ())
    return replace(res, method=method, notes=notes)


def parameter_labels(active: Sequence[str]) -> list[str]:
    return [PARAMETER_NAMES[k] for k in _canonical(active)]
