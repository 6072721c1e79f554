"""Parametric estimation of the drift ``m(s) = alpha + beta * s**gamma``.

Two families of score equations are supported, both built from
pseudo-observations ``(U_hat_i, V_hat_i)`` kept in sample order:

* ``spearman``: responses ``(U_hat - 1/2)(V_hat - 1/2)`` with target
  ``arcsin(rho_i / 2) / (2 pi)``;
* ``pearson``: responses ``Phi^-1(U_hat) Phi^-1(V_hat)`` with target ``rho_i``.

The score for parameter vector ``(alpha, beta, gamma)`` weights the
residuals by ``1``, ``(i/n)**gamma`` and ``(i/n)**gamma * log(i/n)``. The
Spearman system deliberately leaves out the derivative of the arcsine, so its
root is not the least-squares minimiser.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize, stats

from .copula import PairedSample
from .exceptions import ConfigError, ConvergenceError, DomainError, SingularMatrixError
from .mathcore import QuadratureSpec, integrate, std_normal_pdf, std_normal_quantile

__all__ = [
    "AsymptoticReport",
    "IdentifiabilityWarning",
    "ParamFit",
    "SolverConfig",
    "TestResult",
    "asymptotic_report",
    "constancy_test",
    "fit_constant",
    "fit_linear",
    "fit_power",
    "hotelling_test",
    "pearson_responses",
    "pearson_sigma_block",
    "score_equations",
    "solve_inner",
    "spearman_responses",
    "spearman_sigma_block",
    "target_responses",
]

SPEARMAN = "spearman"
PEARSON = "pearson"
ESTIMATORS = (SPEARMAN, PEARSON)

# d/dm of the Spearman target at rho = 1, times log n
_SPEARMAN_SLOPE = math.sqrt(3.0) / (6.0 * math.pi)


class IdentifiabilityWarning(UserWarning):
    """beta is so close to zero that gamma is practically unidentified."""


def _check_estimator(estimator):
    if estimator not in ESTIMATORS:
        raise ConfigError(f"unknown estimator {estimator!r}; expected one of {ESTIMATORS}")


def spearman_responses(sample: PairedSample) -> np.ndarray:
    return (sample.pseudo_u - 0.5) * (sample.pseudo_v - 0.5)


def pearson_responses(sample: PairedSample) -> np.ndarray:
    return std_normal_quantile(sample.pseudo_u) * std_normal_quantile(sample.pseudo_v)


def _responses(data, estimator) -> np.ndarray:
    """Accept either a :class:`PairedSample` or a ready response vector."""
    if isinstance(data, PairedSample):
        z = spearman_responses(data) if estimator == SPEARMAN else pearson_responses(data)
    else:
        z = np.asarray(data, dtype=float)
    if z.ndim != 1:
        raise ConfigError("responses must be one-dimensional")
    return z


def _target(m, log_n, estimator):
    rho = 1.0 - np.asarray(m, dtype=float) / log_n
    if estimator == PEARSON:
        return rho
    half = rho / 2.0
    if np.any(np.abs(half) > 1.0):
        raise DomainError("Spearman target needs |rho_i| <= 2")
    return np.arcsin(half) / (2.0 * math.pi)


def target_responses(n, alpha, beta=0.0, gamma=1.0, estimator=SPEARMAN) -> np.ndarray:
    """Exact expected responses for ``m(s) = alpha + beta s**gamma``."""
    _check_estimator(estimator)
    s = np.arange(1, n + 1) / n
    return _target(alpha + beta * s**gamma, math.log(n), estimator)


def score_equations(z, alpha, beta=0.0, gamma=1.0, estimator=SPEARMAN, k=3) -> np.ndarray:
    """The first ``k`` score sums evaluated at ``(alpha, beta, gamma)``."""
    _check_estimator(estimator)
    z = np.asarray(z, dtype=float)
    n = z.size
    s = np.arange(1, n + 1) / n
    t = s**gamma
    r = z - _target(alpha + beta * t, math.log(n), estimator)
    weights = (np.ones(n), t, t * np.log(s))
    return np.array([float(np.dot(r, w)) for w in weights[:k]])


@dataclass(frozen=True)
class SolverConfig:
    """Tuning of the score-equation solvers.

    ``tol`` bounds ``max |score| / n`` at an accepted root. The power family
    is profiled over ``gamma`` on a log-spaced grid of ``grid_points`` values
    in ``[gamma_min, gamma_max]``.
    """

    tol: float = 1e-10
    max_iter: int = 100
    gamma_min: float = 0.02
    gamma_max: float = 50.0
    grid_points: int = 81

    def __post_init__(self):
        if not self.tol > 0 or self.max_iter < 1:
            raise ConfigError("solver tol must be positive and max_iter >= 1")
        if not 0 < self.gamma_min < self.gamma_max or self.grid_points < 3:
            raise ConfigError("invalid gamma profile grid")


@dataclass
class ParamFit:
    family: str
    estimator: str
    alpha: float
    beta: float
    gamma: float
    residual_norm: float
    n: int
    converged: bool = True
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def theta(self) -> np.ndarray:
        return np.array(_free_params(self.family, self.alpha, self.beta, self.gamma))

    @property
    def alpha_positive(self) -> bool:
        return self.alpha > 0

    def to_row(self) -> dict:
        row = asdict(self)
        row.pop("diagnostics")
        return row

    @classmethod
    def from_row(cls, row: dict) -> "ParamFit":
        return cls(
            family=row["family"],
            estimator=row["estimator"],
            alpha=float(row["alpha"]),
            beta=float(row["beta"]),
            gamma=float(row["gamma"]),
            residual_norm=float(row["residual_norm"]),
            n=int(row["n"]),
            converged=str(row.get("converged", True)) in ("True", "true", "1"),
        )


def _free_params(family, alpha, beta, gamma):
    if family == "constant":
        return (alpha,)
    if family == "linear":
        return (alpha, beta)
    return (alpha, beta, gamma)


def _solve_2x2(a11, a12, a22, b1, b2):
    det = a11 * a22 - a12 * a12
    scale = abs(a11 * a22) + a12 * a12
    if not abs(det) > 1e-13 * scale:
        raise SingularMatrixError("inner 2x2 system is singular")
    return (a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det


def _linear_start(y, t):
    """Least squares of ``y`` on ``[1, t]`` through the normal equations."""
    return _solve_2x2(float(y.size), float(t.sum()), float(t @ t), float(y.sum()), float(y @ t))


def solve_inner(z, gamma, estimator=SPEARMAN, config: SolverConfig | None = None):
    """Solve the first two score equations for ``(alpha, beta)`` at fixed ``gamma``.

    The Pearson system is linear and is solved in closed form. The Spearman
    system is solved by damped Newton from its linearisation at rho = 1.
    Returns ``(alpha, beta)``.
    """
    _check_estimator(estimator)
    config = config or SolverConfig()
    z = np.asarray(z, dtype=float)
    n = z.size
    log_n = math.log(n)
    t = (np.arange(1, n + 1) / n) ** gamma
    if estimator == PEARSON:
        a, b = _linear_start((1.0 - z) * log_n, t)
        return float(a), float(b)

    alpha, beta = _linear_start((1.0 / 12.0 - z) * log_n / _SPEARMAN_SLOPE, t)

    def residual(a, b):
        m = a + b * t
        if np.any(np.abs(1.0 - m / log_n) >= 2.0):
            return None, None
        r = z - _target(m, log_n, SPEARMAN)
        return np.array([r.sum(), r @ t]), m

    f, m = residual(alpha, beta)
    if f is None:
        # linearised start left the arcsine domain; restart from the constant fit
        alpha, beta = (1.0 - 2.0 * math.sin(2.0 * math.pi * float(z.mean()))) * log_n, 0.0
        f, m = residual(alpha, beta)
    for _ in range(config.max_iter):
        if np.max(np.abs(f)) / n <= 1e-16:
            return float(alpha), float(beta)
        rho = 1.0 - m / log_n
        d = 1.0 / (4.0 * math.pi * log_n * np.sqrt(1.0 - rho * rho / 4.0))
        da, db = _solve_2x2(d.sum(), d @ t, d @ (t * t), -f[0], -f[1])
        step = 1.0
        norm = np.max(np.abs(f))
        while step > 1e-10:
            f_new, m_new = residual(alpha + step * da, beta + step * db)
            if f_new is not None and np.max(np.abs(f_new)) < norm:
                break
            step *= 0.5
        else:
            break
        alpha, beta, f, m = alpha + step * da, beta + step * db, f_new, m_new
    if np.max(np.abs(f)) / n <= config.tol:
        return float(alpha), float(beta)
    raise ConvergenceError(f"inner Spearman solve did not converge at gamma={gamma}", best=(alpha, beta))


def _residual_norm(z, fit_args, estimator, k):
    return float(np.max(np.abs(score_equations(z, *fit_args, estimator=estimator, k=k)))) / len(z)


def fit_constant(data, estimator=SPEARMAN) -> ParamFit:
    """Closed-form root of the first score equation for ``m(s) = alpha``."""
    _check_estimator(estimator)
    z = _responses(data, estimator)
    n = z.size
    if n < 2:
        raise ConfigError("fit_constant needs n >= 2")
    log_n = math.log(n)
    zbar = float(np.mean(z))
    if estimator == PEARSON:
        alpha = (1.0 - zbar) * log_n
    else:
        if abs(zbar) > 0.25:
            raise DomainError(f"mean Spearman response {zbar} outside [-1/4, 1/4]")
        alpha = (1.0 - 2.0 * math.sin(2.0 * math.pi * zbar)) * log_n
    resid = _residual_norm(z, (alpha, 0.0, 1.0), estimator, 1)
    return ParamFit("constant", estimator, alpha, 0.0, 1.0, resid, n)


def fit_linear(data, estimator=SPEARMAN, config: SolverConfig | None = None) -> ParamFit:
    """Root of the first two score equations with ``gamma = 1``."""
    _check_estimator(estimator)
    config = config or SolverConfig()
    z = _responses(data, estimator)
    n = z.size
    if n < 4:
        raise ConfigError("fit_linear needs n >= 4")
    alpha, beta = solve_inner(z, 1.0, estimator, config)
    resid = _residual_norm(z, (alpha, beta, 1.0), estimator, 2)
    return ParamFit("linear", estimator, alpha, beta, 1.0, resid, n)


def _ls_objective(z, alpha, beta, gamma, estimator):
    n = z.size
    t = (np.arange(1, n + 1) / n) ** gamma
    r = z - _target(alpha + beta * t, math.log(n), estimator)
    return float(r @ r)


def fit_power(data, estimator=SPEARMAN, config: SolverConfig | None = None) -> ParamFit:
    """Root of the three score equations for ``m(s) = alpha + beta s**gamma``.

    ``gamma`` is profiled out: at each ``gamma`` the first two equations fix
    ``(alpha, beta)``, leaving the third as a scalar function of ``gamma``
    whose sign changes on a log-spaced grid are refined with Brent's method.
    When several roots are bracketed the one with the smallest residual sum
    of squares is returned; all of them are listed in ``diagnostics["roots"]``.

    Raises
    ------
    ConvergenceError
        If the third score equation never changes sign on the grid. The
        grid point with the smallest ``|score_3|`` is attached as ``best``.
    """
    _check_estimator(estimator)
    config = config or SolverConfig()
    z = _responses(data, estimator)
    n = z.size
    if n < 10:
        raise ConfigError("fit_power needs n >= 10")

    def profile(gamma):
        alpha, beta = solve_inner(z, gamma, estimator, config)
        return alpha, beta, score_equations(z, alpha, beta, gamma, estimator)[2] / n

    grid = np.geomspace(config.gamma_min, config.gamma_max, config.grid_points)
    values = []
    for g in grid:
        try:
            values.append(profile(g))
        except (ConvergenceError, SingularMatrixError, DomainError):
            values.append(None)

    def third(g):
        return profile(g)[2]

    roots = []
    for k in range(len(grid) - 1):
        lo, hi = values[k], values[k + 1]
        if lo is None or hi is None:
            continue
        if lo[2] == 0.0:
            roots.append(float(grid[k]))
            continue
        if np.sign(lo[2]) != np.sign(hi[2]):
            try:
                g = optimize.brentq(third, grid[k], grid[k + 1], xtol=1e-14, rtol=1e-15,
                                    maxiter=config.max_iter)
            except (ConvergenceError, SingularMatrixError, DomainError, RuntimeError):
                continue
            roots.append(float(g))

    if not roots:
        usable = [(abs(v[2]), g, v) for g, v in zip(grid, values) if v is not None]
        best = None
        if usable:
            _, g, (a, b, _) = min(usable, key=lambda item: item[0])
            best = ParamFit("power", estimator, a, b, float(g),
                            _residual_norm(z, (a, b, g), estimator, 3), n, converged=False)
        raise ConvergenceError("third score equation has no sign change on the gamma grid", best=best)

    candidates = []
    for g in roots:
        a, b = solve_inner(z, g, estimator, config)
        candidates.append((_ls_objective(z, a, b, g, estimator), g, a, b))
    _, gamma, alpha, beta = min(candidates)
    resid = _residual_norm(z, (alpha, beta, gamma), estimator, 3)
    fit = ParamFit("power", estimator, alpha, beta, gamma, resid, n,
                   converged=resid <= max(config.tol, 1e-8),
                   diagnostics={"roots": roots})
    if abs(beta) < 1e-3:
        warnings.warn(f"|beta_hat| = {abs(beta):.2e} < 1e-3: gamma is poorly identified",
                      IdentifiabilityWarning, stacklevel=2)
    return fit


# ---------------------------------------------------------------------------
# asymptotic covariance objects


@functools.cache
def rank_kernel_integral() -> float:
    """int_0^1 (u - 1/2)^2 phi(Phi^-1(u)) du."""

    def f(u):
        inner = np.clip(u, 1e-300, 1 - 1e-16)
        return (u - 0.5) ** 2 * std_normal_pdf(std_normal_quantile(inner))

    return integrate(f, 0.0, 1.0, QuadratureSpec(abs_tol=1e-13))


def spearman_sigma_block(gamma):
    """(sigma22, sigma23, sigma33) of the Spearman limit, in exact arithmetic form."""
    a, b = 1.0 + gamma, 1.0 + 2.0 * gamma
    s22 = 1.0 / (180.0 * b) - 1.0 / (180.0 * a**2)
    s23 = -1.0 / (180.0 * b**2) + 1.0 / (180.0 * a**3)
    s33 = 1.0 / (90.0 * b**3) - 1.0 / (180.0 * a**4)
    return s22, s23, s33


def pearson_sigma_block(gamma):
    a, b = 1.0 + gamma, 1.0 + 2.0 * gamma
    s22 = 2.0 / b - 2.0 / a**2
    s23 = -2.0 / b**2 + 2.0 / a**3
    s33 = 4.0 / b**3 - 2.0 / a**4
    return s22, s23, s33


def delta_matrix(beta, gamma) -> np.ndarray:
    """Limit of ``(log n / n) d score / d theta`` for the Pearson system.

    The Spearman limit is this matrix times sqrt(3) / (6 pi).
    """
    a, b = 1.0 + gamma, 1.0 + 2.0 * gamma
    return np.array([
        [1.0, 1.0 / a, -beta / a**2],
        [1.0 / a, 1.0 / b, -beta / b**2],
        [-1.0 / a**2, -1.0 / b**2, 2.0 * beta / b**3],
    ])


def _root_mean_m(alpha, beta, gamma):
    def f(s):
        return np.sqrt(np.maximum(alpha + beta * s**gamma, 0.0))

    return integrate(f, 0.0, 1.0, QuadratureSpec(abs_tol=1e-12))


@dataclass
class AsymptoticReport:
    """Limit covariance, derivative matrix and rate diagonal for a fit.

    For the power family ``Sigma`` is the covariance of the normalised
    score vector and ``Delta_hat`` the derivative matrix at the fitted values,
    so that ``scaling @ Delta_hat @ (theta_hat - theta)`` is asymptotically
    ``N(0, Sigma)``. For the linear and constant families ``Delta_hat`` is the
    contrast matrix mapping ``(alpha, beta)`` to ``(alpha + beta/2,
    alpha/2 + beta/3)`` (or the identity), with ``Sigma`` in those units.
    ``Sigma0`` is ``Sigma`` with the fast first coordinate removed.
    """

    family: str
    estimator: str
    n: int
    Sigma: np.ndarray
    Sigma0: np.ndarray
    Delta_hat: np.ndarray
    scaling: np.ndarray

    def to_row(self) -> dict:
        row = {"family": self.family, "estimator": self.estimator, "n": self.n}
        p = self.Sigma.shape[0]
        for name in ("Sigma", "Sigma0", "Delta_hat"):
            mat = getattr(self, name)
            for i in range(p):
                for j in range(p):
                    row[f"{name}_{i + 1}{j + 1}"] = float(mat[i, j])
        for i in range(p):
            row[f"scaling_{i + 1}"] = float(self.scaling[i, i])
        return row


def asymptotic_report(fit: ParamFit) -> AsymptoticReport:
    """Evaluate the limiting covariance objects at the fitted parameters."""
    if not fit.converged:
        raise ConfigError("asymptotic_report needs a converged fit")
    n, log_n = fit.n, math.log(fit.n)
    root_n = math.sqrt(n)
    spearman = fit.estimator == SPEARMAN
    slow = root_n / log_n
    fast = root_n / log_n**0.75 if spearman else root_n

    if fit.family == "power":
        if spearman:
            s11 = math.sqrt(2.0) * _root_mean_m(fit.alpha, fit.beta, fit.gamma) * rank_kernel_integral()
            s22, s23, s33 = spearman_sigma_block(fit.gamma)
            delta = _SPEARMAN_SLOPE * delta_matrix(fit.beta, fit.gamma)
        else:
            g = fit.gamma
            s11 = (4.0 * (fit.alpha + fit.beta / (1.0 + g)) ** 2
                   + 2.0 * fit.beta**2 * (1.0 / (1.0 + 2.0 * g) - 1.0 / (1.0 + g) ** 2))
            s22, s23, s33 = pearson_sigma_block(g)
            delta = delta_matrix(fit.beta, fit.gamma)
        sigma = np.array([[s11, 0.0, 0.0], [0.0, s22, s23], [0.0, s23, s33]])
        scaling = np.diag([fast, slow, slow])
    elif fit.family == "linear":
        if spearman:
            s11 = math.sqrt(2.0) * _root_mean_m(fit.alpha, fit.beta, 1.0) * rank_kernel_integral()
            sigma = 12.0 * math.pi**2 * np.diag([s11, 1.0 / 2160.0])
        else:
            a, b = fit.alpha, fit.beta
            sigma = np.diag([4.0 * a * a + 4.0 * a * b + 7.0 * b * b / 6.0, 1.0 / 6.0])
        delta = np.array([[1.0, 0.5], [0.5, 1.0 / 3.0]])
        scaling = np.diag([fast, slow])
    else:
        if spearman:
            s11 = math.sqrt(2.0) * math.sqrt(max(fit.alpha, 0.0)) * rank_kernel_integral()
            sigma = np.array([[12.0 * math.pi**2 * s11]])
        else:
            sigma = np.array([[4.0 * fit.alpha**2]])
        delta = np.eye(1)
        scaling = np.diag([fast])
    sigma0 = sigma.copy()
    sigma0[0, :] = 0.0
    sigma0[:, 0] = 0.0
    return AsymptoticReport(fit.family, fit.estimator, n, sigma, sigma0, delta, scaling)


@dataclass(frozen=True)
class TestResult:
    statistic: float
    dof: int
    p_value: float
    null_description: str

    __test__ = False  # not a pytest class


def hotelling_test(fit: ParamFit, report: AsymptoticReport, null_theta) -> TestResult:
    """Wald/Hotelling T^2 test of ``theta = null_theta`` with a chi-square reference.

    The statistic is ``x' Sigma^-1 x`` with ``x = scaling @ Delta_hat @
    (theta_hat - null_theta)``; its degrees of freedom equal the number of
    free parameters of the fitted family.
    """
    theta = fit.theta
    null = np.asarray(null_theta, dtype=float)
    if null.shape != theta.shape:
        raise ConfigError(f"null_theta needs {theta.size} values for the {fit.family} family")
    sigma = report.Sigma
    if not sigma[0, 0] > 0:
        raise SingularMatrixError("Sigma is singular in its first (fast-rate) block")
    if sigma.shape[0] > 1:
        lower = sigma[1:, 1:]
        if not np.all(np.linalg.eigvalsh(lower) > 1e-14 * np.max(np.abs(lower))):
            raise SingularMatrixError("Sigma is singular in its lower (slow-rate) block")
    x = report.scaling @ report.Delta_hat @ (theta - null)
    stat = float(x @ np.linalg.solve(sigma, x))
    dof = theta.size
    p_value = float(stats.chi2.sf(stat, dof))
    names = ("alpha", "beta", "gamma")[:dof]
    desc = ", ".join(f"{k}={v!r}" for k, v in zip(names, null.tolist()))
    return TestResult(stat, dof, p_value, f"{fit.family} {fit.estimator}: {desc}")


def constancy_test(data, estimator=SPEARMAN, config: SolverConfig | None = None) -> TestResult:
    """Test ``beta = 0`` in ``m(s) = alpha + beta s``.

    Uses the contrast ``(alpha/2 + beta/3) - (alpha + beta/2)/2 = beta/12``
    of the two asymptotically independent linear combinations of the linear
    fit. Its variance is the slow-rate block of the linear-family limit
    covariance; the fast-rate block is asymptotically negligible. The statistic is the squared standardised contrast, referred to a
    chi-square with one degree of freedom (a two-sided normal test).
    """
    fit = fit_linear(data, estimator, config)
    report = asymptotic_report(fit)
    var = report.Sigma[1, 1] / report.scaling[1, 1] ** 2
    contrast = fit.beta / 12.0
    stat = contrast * contrast / var
    return TestResult(float(stat), 1, float(stats.chi2.sf(stat, 1)),
                      f"linear {estimator}: beta=0 (constant drift)")
