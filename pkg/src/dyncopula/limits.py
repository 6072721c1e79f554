"""Limit law of normalised componentwise maxima for the drifting normal copula.

For x, y < 0 the joint law of ``(n (max U_i - 1), n (max V_i - 1))``
converges to

    G(x, y) = exp(-l(x, y)),
    l(x, y) = -x * int_0^1 Phi(sqrt(m) + log(x/y) / (2 sqrt(m))) ds
              -y * int_0^1 Phi(sqrt(m) + log(y/x) / (2 sqrt(m))) ds

when m is continuous and positive, to exp(min(x, y)) when m vanishes
uniformly and to exp(x + y) when m diverges uniformly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .copula import CorrelationPath, build_schedule, sample_normal_scores
from .exceptions import ConfigError, DomainError
from .mathcore import QuadratureSpec, RngStream, integrate, std_normal_cdf

__all__ = [
    "COMONOTONE",
    "HUSLER_REISS",
    "INDEPENDENT",
    "LimitLaw",
    "MaximaExperiment",
    "empirical_maxima_cdf",
    "limit_cdf",
    "tail_coefficient",
    "tail_dependence_fn",
]

COMONOTONE = "comonotone"
INDEPENDENT = "independent"
HUSLER_REISS = "husler-reiss"
REGIMES = (COMONOTONE, INDEPENDENT, HUSLER_REISS)


@dataclass(frozen=True)
class LimitLaw:
    """Limit law of the maxima for ``path`` in the chosen asymptotic regime.

    The regime is never inferred from the path: the comonotone and
    independent regimes describe sequences of paths, not a fixed ``m``.
    """

    path: CorrelationPath
    regime: str = HUSLER_REISS
    quad: QuadratureSpec = field(default_factory=QuadratureSpec)

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigError(f"unknown regime {self.regime!r}; expected one of {REGIMES}")
        if self.regime == HUSLER_REISS and not self.path.min_on_unit_interval() > 0:
            raise ConfigError("the Husler-Reiss mixture regime needs m(s) > 0 on [0, 1]")


def _check_negative(x, y):
    if not (x < 0 and y < 0):
        raise DomainError(f"limit law is defined for x < 0 and y < 0, got ({x}, {y})")


def _mixture_integral(law: LimitLaw, log_ratio: float) -> float:
    if log_ratio == 0.0:
        def integrand(s):
            return std_normal_cdf(np.sqrt(law.path(s)))
    else:
        def integrand(s):
            root = np.sqrt(law.path(s))
            return std_normal_cdf(root + log_ratio / (2.0 * root))
    return integrate(integrand, 0.0, 1.0, law.quad)


def tail_dependence_fn(law: LimitLaw, x: float, y: float) -> float:
    """l(x, y) = lim t^-1 (1 - G(tx, ty)); homogeneous of degree one."""
    _check_negative(x, y)
    if law.regime == COMONOTONE:
        return -min(x, y)
    if law.regime == INDEPENDENT:
        return -x - y
    if x == y:
        return -2.0 * x * _mixture_integral(law, 0.0)
    log_xy = math.log(x / y)
    return -x * _mixture_integral(law, log_xy) - y * _mixture_integral(law, -log_xy)


def limit_cdf(law: LimitLaw, x: float, y: float) -> float:
    """G(x, y) = exp(-l(x, y))."""
    return math.exp(-tail_dependence_fn(law, x, y))


def tail_coefficient(law: LimitLaw) -> float:
    """l(-1, -1) = 2 int_0^1 Phi(sqrt(m(s))) ds, between 1 and 2."""
    if law.regime == COMONOTONE:
        return 1.0
    if law.regime == INDEPENDENT:
        return 2.0
    return 2.0 * _mixture_integral(law, 0.0)


@dataclass(frozen=True)
class MaximaExperiment:
    path: CorrelationPath
    n: int
    replications: int
    grid: tuple
    seed: int = 0

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.n < 2:
            raise ConfigError("n must be >= 2")
        if not self.grid:
            raise ConfigError("grid must contain at least one (x, y) point")
        for x, y in self.grid:
            if not (x < 0 and y < 0):
                raise ConfigError(f"grid points must be strictly negative, got ({x}, {y})")


def normalized_maxima(path: CorrelationPath, n: int, replications: int, seed: int):
    """Per-replication ``(n (max U - 1), n (max V - 1))`` arrays.

    Replication ``r`` uses ``RngStream(seed, r)``. The maxima are taken on the
    latent normal scale and mapped through the upper tail, which keeps
    ``n (1 - max U)`` accurate when ``max U`` is within rounding of 1.
    """
    schedule = build_schedule(path, n)
    mx = np.empty(replications)
    my = np.empty(replications)
    for r in range(replications):
        x, y = sample_normal_scores(schedule, RngStream(seed, r))
        mx[r] = x.max()
        my[r] = y.max()
    return -n * std_normal_cdf(-mx), -n * std_normal_cdf(-my)


def empirical_maxima_cdf(exp: MaximaExperiment, law: LimitLaw | None = None) -> list[dict]:
    """Empirical joint CDF of the normalised maxima next to G on ``exp.grid``.

    Returns one row per grid point with keys x, y, empirical, limit, gap.
    """
    law = law or LimitLaw(exp.path)
    ax, ay = normalized_maxima(exp.path, exp.n, exp.replications, exp.seed)
    rows = []
    for x, y in exp.grid:
        hits = int(np.count_nonzero((ax <= x) & (ay <= y)))
        empirical = hits / exp.replications
        limit = limit_cdf(law, x, y)
        rows.append({"x": x, "y": y, "empirical": empirical, "limit": limit,
                     "gap": abs(empirical - limit)})
    return rows
