"""Local-linear estimation of the drift curve ``m(s)``.

At an interior point ``s`` the smoother uses the design points ``j/n`` and
the weights

    w_j = k((s - j/n) / h) * (S_2 - (s - j/n) * S_1),
    S_l = sum_j k((s - j/n) / h) * (s - j/n)**l,

which reproduce constant and linear response sequences exactly. Two
back-transforms turn the smoothed responses into an estimate of ``m``:

* ``spearman``: ``m_hat = (1 - 2 sin(2 pi Q_hat)) log n`` with ``Q_hat`` the
  smoothed ``(U_hat - 1/2)(V_hat - 1/2)``;
* ``pearson``: ``m_hat = -(smoothed Phi^-1(U_hat) Phi^-1(V_hat) - 1) log n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .copula import PairedSample
from .exceptions import ConfigError, ConvergenceError, DomainError
from .mathcore import QuadratureSpec, integrate
from .parametric import PEARSON, SPEARMAN, pearson_responses, spearman_responses

__all__ = [
    "EPANECHNIKOV",
    "CurveFit",
    "DegenerateWindowError",
    "Kernel",
    "default_grid",
    "fit_m_curve",
    "fit_q_curve",
    "limit_lambda",
    "local_linear_weights",
    "optimal_bandwidth",
    "pilot_second_derivative",
    "practical_bandwidth",
    "theorem4_limit_params",
]

ROUTES = (SPEARMAN, PEARSON)
FLAG_OUT_OF_RANGE = "q_out_of_range"


class DegenerateWindowError(ConfigError):
    """Fewer than two design points fall inside the smoothing window."""


def _epanechnikov(t):
    t = np.asarray(t, dtype=float)
    return np.where(np.abs(t) <= 1.0, 0.75 * (1.0 - t * t), 0.0)


@dataclass(frozen=True)
class Kernel:
    """A symmetric smoothing kernel supported on [-1, 1].

    ``mass``, ``second_moment`` and ``roughness`` hold ``int k``,
    ``int t^2 k`` and ``int k^2``.
    """

    name: str
    evaluate: Callable = field(repr=False, compare=False)
    mass: float = 1.0
    second_moment: float = 0.0
    roughness: float = 0.0

    def __call__(self, t):
        return self.evaluate(t)

    @classmethod
    def custom(cls, name: str, fn: Callable) -> "Kernel":
        """Wrap a vectorised ``fn`` after checking symmetry, support and mass.

        Values outside [-1, 1] are forced to zero.
        """

        def evaluate(t):
            t = np.asarray(t, dtype=float)
            return np.where(np.abs(t) <= 1.0, np.asarray(fn(t), dtype=float), 0.0)

        probe = np.linspace(0.0, 1.0, 101)
        left, right = evaluate(-probe), evaluate(probe)
        if np.any(right < 0):
            raise ConfigError(f"kernel {name!r} takes negative values")
        if not np.allclose(left, right, rtol=1e-12, atol=1e-14):
            raise ConfigError(f"kernel {name!r} is not symmetric")
        spec = QuadratureSpec(abs_tol=1e-14)
        mass = integrate(evaluate, -1.0, 1.0, spec)
        if abs(mass - 1.0) > 1e-12:
            raise ConfigError(f"kernel {name!r} integrates to {mass!r}, not 1")
        second = integrate(lambda t: t * t * evaluate(t), -1.0, 1.0, spec)
        rough = integrate(lambda t: evaluate(t) ** 2, -1.0, 1.0, spec)
        return cls(name, evaluate, mass, second, rough)


EPANECHNIKOV = Kernel("epanechnikov", _epanechnikov, 1.0, 0.2, 0.6)


def default_grid() -> np.ndarray:
    """s = 0.10, 0.11, ..., 0.90."""
    return np.round(np.arange(10, 91) / 100.0, 2)


def _check_window(s, h):
    if not 0.0 < s < 1.0:
        raise DomainError(f"evaluation point must lie in (0, 1), got s={s!r}")
    if not 0.0 < h < 0.5:
        raise DomainError(f"bandwidth must lie in (0, 1/2), got h={h!r}")


def local_linear_weights(s: float, n: int, h: float, kernel: Kernel = EPANECHNIKOV) -> np.ndarray:
    """Weights ``w_j``, ``j = 1..n``, of the local-linear smoother at ``s``.

    Raises
    ------
    DomainError
        If ``s`` is not interior, ``h`` is outside (0, 1/2) or ``n h < 5``.
    DegenerateWindowError
        If fewer than two design points fall in ``[s - h, s + h]``.
    """
    _check_window(s, h)
    if n * h < 5:
        raise DomainError(f"n*h = {n * h!r} < 5: too few points in the smoothing window")
    offset = s - np.arange(1, n + 1) / n
    inside = np.count_nonzero(np.abs(offset) <= h)
    if inside < 2:
        raise DegenerateWindowError(f"only {inside} design point(s) within h={h!r} of s={s!r}")
    kv = kernel(offset / h)
    s1 = float(kv @ offset)
    s2 = float(kv @ (offset * offset))
    weights = kv * (s2 - offset * s1)
    if not weights.sum() > 0:
        raise DegenerateWindowError(f"local-linear weights do not sum to a positive value at s={s!r}")
    return weights


def _smooth(z, grid, h, kernel):
    z = np.asarray(z, dtype=float)
    out = np.empty(len(grid))
    for k, s in enumerate(grid):
        try:
            w = local_linear_weights(float(s), z.size, h, kernel)
        except DomainError as exc:
            raise type(exc)(f"at s={float(s)!r}: {exc}") from None
        out[k] = (w @ z) / w.sum()
    return out


def _route_responses(data, route):
    if isinstance(data, PairedSample):
        return spearman_responses(data) if route == SPEARMAN else pearson_responses(data)
    return np.asarray(data, dtype=float)


def fit_q_curve(data, grid, h: float, kernel: Kernel = EPANECHNIKOV) -> np.ndarray:
    """Smoothed Spearman responses ``Q_hat(s)`` on ``grid``.

    ``data`` is a :class:`PairedSample` or an already computed response
    sequence in sample order.
    """
    return _smooth(_route_responses(data, SPEARMAN), grid, h, kernel)


@dataclass
class CurveFit:
    """Estimated ``m`` on a grid; ``nan`` where the point is flagged."""

    grid: np.ndarray
    values: np.ndarray
    h: float
    kernel: str
    route: str
    n: int
    flags: tuple = ()

    def rows(self) -> list[dict]:
        return [
            {"s": float(s), "m_hat": float(m), "route": self.route, "h": self.h,
             "kernel": self.kernel, "flag": flag}
            for s, m, flag in zip(self.grid, self.values, self.flags)
        ]


def fit_m_curve(data, grid, h: float, kernel: Kernel = EPANECHNIKOV, route: str = SPEARMAN) -> CurveFit:
    """Local-linear estimate of ``m`` on ``grid`` by the chosen route.

    On the Spearman route a smoothed value outside (-1/12, 1/12] cannot be
    inverted; such points get ``nan`` and the flag ``q_out_of_range``.
    """
    if route not in ROUTES:
        raise ConfigError(f"route must be one of {ROUTES}, got {route!r}")
    z = _route_responses(data, route)
    n = z.size
    if n < 10:
        raise ConfigError("curve fitting needs n >= 10")
    grid = np.asarray(grid, dtype=float)
    smooth = _smooth(z, grid, h, kernel)
    log_n = math.log(n)
    flags = [""] * grid.size
    if route == SPEARMAN:
        values = np.full(grid.size, np.nan)
        ok = (smooth > -1.0 / 12.0) & (smooth <= 1.0 / 12.0)
        values[ok] = (1.0 - 2.0 * np.sin(2.0 * math.pi * smooth[ok])) * log_n
        for k in np.flatnonzero(~ok):
            flags[k] = FLAG_OUT_OF_RANGE
    else:
        values = -(smooth - 1.0) * log_n
    return CurveFit(grid, values, float(h), kernel.name, route, n, tuple(flags))


def _route_variance_factor(kernel, route):
    if route == SPEARMAN:
        return math.pi**2 / 15.0 * kernel.roughness
    if route == PEARSON:
        return 2.0 * kernel.roughness
    raise ConfigError(f"route must be one of {ROUTES}, got {route!r}")


def optimal_bandwidth(m_second_deriv: float, n: int, kernel: Kernel = EPANECHNIKOV,
                      route: str = SPEARMAN) -> float:
    """Asymptotic MSE-optimal bandwidth at a point with curvature ``m''``.

    ``h = (log^2 n / n)^{1/5} * (V / (m'' int t^2 k)^2)^{1/5}`` where ``V`` is
    the route's limit variance.

    Raises
    ------
    DomainError
        If ``m'' = 0``: the bias vanishes and the optimum is unbounded.
    """
    if n < 10:
        raise ConfigError(f"n must be >= 10, got {n}")
    if m_second_deriv == 0:
        raise DomainError("m'' = 0: the optimal bandwidth is unbounded; use practical_bandwidth")
    var = _route_variance_factor(kernel, route)
    rate = (math.log(n) ** 2 / n) ** 0.2
    return rate * (var / (m_second_deriv * kernel.second_moment) ** 2) ** 0.2


def practical_bandwidth(n: int, d: float) -> float:
    """``d * (log^2 n / n)^{1/5}``."""
    if n < 10:
        raise ConfigError(f"n must be >= 10, got {n}")
    if d < 0:
        raise ConfigError(f"bandwidth constant d must be nonnegative, got {d}")
    return d * (math.log(n) ** 2 / n) ** 0.2


def limit_lambda(n: int, h: float) -> float:
    """``h^2 sqrt(n h) / log n`` at the given sample size and bandwidth."""
    return h * h * math.sqrt(n * h) / math.log(n)


def theorem4_limit_params(m_second_deriv: float, lambda_limit: float, kernel: Kernel = EPANECHNIKOV,
                          route: str = SPEARMAN) -> tuple[float, float]:
    """Asymptotic (bias, variance) of ``sqrt(n h) / log n * (m_hat(s) - m(s))``.

    The bias ``lambda m'' int t^2 k / 2`` is shared by both routes.
    """
    var = _route_variance_factor(kernel, route)
    return 0.5 * lambda_limit * m_second_deriv * kernel.second_moment, var


def pilot_second_derivative(data) -> float:
    """Curvature ``m''`` from a quadratic pilot ``m(s) = a + b s + c s^2``.

    The pilot solves the Spearman score equations with weights ``1, s, s^2``
    and returns ``2 c``.
    """
    z = _route_responses(data, SPEARMAN)
    n = z.size
    if n < 10:
        raise ConfigError("pilot fit needs n >= 10")
    log_n = math.log(n)
    s = np.arange(1, n + 1) / n
    basis = np.vstack([np.ones(n), s, s * s])

    def scores(coef):
        rho = 1.0 - (coef @ basis) / log_n
        rho = np.clip(rho, -2.0, 2.0)
        return basis @ (z - np.arcsin(rho / 2.0) / (2.0 * math.pi)) / n

    # start from the linearised model around rho = 1
    slope = math.sqrt(3.0) / (6.0 * math.pi)
    start = np.linalg.lstsq(basis.T, (1.0 / 12.0 - z) * log_n / slope, rcond=None)[0]
    sol = optimize.root(scores, start, method="hybr", options={"xtol": 1e-12})
    if not sol.success:
        raise ConvergenceError(f"quadratic pilot fit failed: {sol.message}")
    return float(2.0 * sol.x[2])
