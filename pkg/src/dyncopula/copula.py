"""Bivariate normal copula with a correlation that drifts along the sample.

Observation ``i`` of a sample of size ``n`` has correlation

    rho_i = 1 - m(i / n) / log(n)

for a nonnegative drift function ``m`` described by :class:`CorrelationPath`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .exceptions import ConfigError, DomainError
from .mathcore import RngStream, std_normal_cdf, std_normal_quantile

__all__ = [
    "CorrelationPath",
    "PairedSample",
    "RhoSchedule",
    "build_schedule",
    "conditional_cdf",
    "copula_density",
    "kendall_map",
    "pseudo_observations",
    "sample_array",
    "sample_pair",
    "spearman_map",
    "spearman_map_inverse",
]

FAMILIES = ("constant", "linear", "power", "tabulated")


@dataclass(frozen=True)
class CorrelationPath:
    """The drift function ``m(s)`` on [0, 1].

    Use the constructors :meth:`constant`, :meth:`linear`, :meth:`power` and
    :meth:`tabulated` rather than instantiating directly. Tabulated paths
    interpolate linearly between knots and hold the end values constant
    outside the knot range.
    """

    family: str
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 1.0
    knots: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown path family {self.family!r}")
        if self.family == "power":
            if not self.gamma > 0:
                raise ConfigError(f"power path needs gamma > 0, got {self.gamma}")
            if self.beta == 0:
                raise ConfigError("power path needs beta != 0 (gamma is not identified at beta = 0)")
        if self.family == "tabulated":
            if len(self.knots) < 2 or len(self.knots) != len(self.values):
                raise ConfigError("tabulated path needs at least two (s, m) knots")
            if any(b <= a for a, b in zip(self.knots, self.knots[1:])):
                raise ConfigError("tabulated knots must be strictly increasing")

    @classmethod
    def constant(cls, alpha: float) -> "CorrelationPath":
        return cls("constant", alpha=float(alpha))

    @classmethod
    def linear(cls, alpha: float, beta: float) -> "CorrelationPath":
        return cls("linear", alpha=float(alpha), beta=float(beta))

    @classmethod
    def power(cls, alpha: float, beta: float, gamma: float) -> "CorrelationPath":
        return cls("power", alpha=float(alpha), beta=float(beta), gamma=float(gamma))

    @classmethod
    def tabulated(cls, s, m) -> "CorrelationPath":
        return cls("tabulated", knots=tuple(float(x) for x in s), values=tuple(float(x) for x in m))

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.family == "constant":
            out = np.full_like(s, self.alpha)
        elif self.family == "linear":
            out = self.alpha + self.beta * s
        elif self.family == "power":
            out = self.alpha + self.beta * np.power(s, self.gamma)
        else:
            out = np.interp(s, self.knots, self.values)
        return float(out) if out.ndim == 0 else out

    def second_derivative(self, s):
        """m''(s); zero for constant, linear and piecewise-linear paths."""
        s = np.asarray(s, dtype=float)
        if self.family == "power":
            g = self.gamma
            out = self.beta * g * (g - 1.0) * np.power(s, g - 2.0)
        else:
            out = np.zeros_like(s)
        return float(out) if out.ndim == 0 else out

    def min_on_unit_interval(self, points: int = 2001) -> float:
        if self.family == "tabulated":
            return min(self.values)
        grid = np.linspace(0.0, 1.0, points)
        return float(np.min(self(grid)))

    def describe(self) -> str:
        if self.family == "constant":
            return f"constant(alpha={self.alpha!r})"
        if self.family == "linear":
            return f"linear(alpha={self.alpha!r},beta={self.beta!r})"
        if self.family == "power":
            return f"power(alpha={self.alpha!r},beta={self.beta!r},gamma={self.gamma!r})"
        return f"tabulated({len(self.knots)} knots)"


@dataclass(frozen=True)
class RhoSchedule:
    n: int
    rho: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.rho.setflags(write=False)


def build_schedule(path: CorrelationPath, n: int) -> RhoSchedule:
    """Correlations ``rho_i = 1 - m(i/n) / log n`` for ``i = 1..n``.

    Raises
    ------
    DomainError
        If some ``m(i/n)`` is negative or reaches ``2 log n`` (rho <= -1).
    """
    if n < 2:
        raise ConfigError(f"sample size must be >= 2, got {n}")
    log_n = math.log(n)
    m = np.asarray(path(np.arange(1, n + 1) / n), dtype=float)
    if np.any(m < 0):
        i = int(np.argmax(m < 0)) + 1
        raise DomainError(f"m(i/n) is negative at i={i}: {m[i - 1]!r}")
    if np.any(m >= 2.0 * log_n):
        i = int(np.argmax(m >= 2.0 * log_n)) + 1
        raise DomainError(
            f"m(i/n) = {m[i - 1]!r} at i={i} is not below 2 log n = {2 * log_n!r}; rho would be <= -1"
        )
    return RhoSchedule(n=n, rho=1.0 - m / log_n)


def pseudo_observations(x) -> np.ndarray:
    """Ranks divided by ``n + 1``; tied values get their average rank."""
    x = np.asarray(x, dtype=float)
    return rankdata(x, method="average") / (x.size + 1)


@dataclass(frozen=True)
class PairedSample:
    """Observations in sample order together with their pseudo-observations."""

    u: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    pseudo_u: np.ndarray = field(repr=False)
    pseudo_v: np.ndarray = field(repr=False)

    @classmethod
    def from_columns(cls, u, v) -> "PairedSample":
        """Build from raw or copula-scale columns; only ranks enter the estimators."""
        u = np.array(u, dtype=float)
        v = np.array(v, dtype=float)
        if u.shape != v.shape or u.ndim != 1:
            raise ConfigError("u and v must be one-dimensional and of equal length")
        if u.size == 0:
            raise ConfigError("empty sample")
        sample = cls(u, v, pseudo_observations(u), pseudo_observations(v))
        for arr in (sample.u, sample.v, sample.pseudo_u, sample.pseudo_v):
            arr.setflags(write=False)
        return sample

    @property
    def n(self) -> int:
        return int(self.u.size)


def _check_open_unit(name, x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0.0)) or np.any(~(x < 1.0)):
        raise DomainError(f"{name} must lie in the open interval (0, 1)")
    return x


def _check_rho(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(~(np.abs(rho) < 1.0)):
        raise DomainError("rho must satisfy -1 < rho < 1")
    return rho


def _scalar_or_array(out):
    out = np.asarray(out)
    return float(out) if out.ndim == 0 else out


def copula_density(u, v, rho):
    """Density of the normal copula with correlation ``rho`` at (u, v)."""
    u = _check_open_unit("u", u)
    v = _check_open_unit("v", v)
    rho = _check_rho(rho)
    x = std_normal_quantile(u)
    y = std_normal_quantile(v)
    one_m = 1.0 - rho * rho
    expo = (2.0 * rho * x * y - rho * rho * (x * x + y * y)) / (2.0 * one_m)
    return _scalar_or_array(np.exp(expo) / np.sqrt(one_m))


def conditional_cdf(u, v, rho):
    """dC/du: the distribution of V given U = u, evaluated at v."""
    u = _check_open_unit("u", u)
    v = _check_open_unit("v", v)
    rho = _check_rho(rho)
    arg = (std_normal_quantile(v) - rho * std_normal_quantile(u)) / np.sqrt(1.0 - rho * rho)
    return _scalar_or_array(std_normal_cdf(arg))


def _normals_to_pairs(z1, z2, rho):
    w = rho * z1 + np.sqrt(np.maximum(1.0 - rho * rho, 0.0)) * z2
    return z1, w


def sample_pair(rho: float, stream: RngStream) -> tuple[float, float]:
    """One draw (U, V) from the normal copula; replays identically per stream."""
    if not -1.0 < rho <= 1.0:
        raise DomainError("rho must satisfy -1 < rho <= 1")
    z1, z2 = stream.generator().standard_normal(2)
    x, y = _normals_to_pairs(z1, z2, rho)
    return float(std_normal_cdf(x)), float(std_normal_cdf(y))


def sample_normal_scores(schedule: RhoSchedule, stream: RngStream) -> tuple[np.ndarray, np.ndarray]:
    """Latent normal coordinates (Phi^-1(U_i), Phi^-1(V_i)) of one array draw."""
    z = stream.generator().standard_normal((2, schedule.n))
    return _normals_to_pairs(z[0], z[1], schedule.rho)


def sample_array(schedule: RhoSchedule, stream: RngStream) -> PairedSample:
    """Draw the n independent pairs of a triangular-array row.

    Pseudo-observations are computed from the latent normal scores, which
    have the same ranks as (U, V) but never collapse to ties when U rounds
    to 1.0 in double precision.
    """
    x, y = sample_normal_scores(schedule, stream)
    sample = PairedSample(
        std_normal_cdf(x), std_normal_cdf(y), pseudo_observations(x), pseudo_observations(y)
    )
    for arr in (sample.u, sample.v, sample.pseudo_u, sample.pseudo_v):
        arr.setflags(write=False)
    return sample


def spearman_map(rho):
    """E[(U - 1/2)(V - 1/2)] = arcsin(rho / 2) / (2 pi)."""
    rho = np.asarray(rho, dtype=float)
    if np.any(np.abs(rho) > 1.0):
        raise DomainError("spearman_map requires |rho| <= 1")
    return _scalar_or_array(np.arcsin(rho / 2.0) / (2.0 * math.pi))


def spearman_map_inverse(q):
    """rho = 2 sin(2 pi q) for |q| <= 1/12 (a few ulps of slack at the ends)."""
    q = np.asarray(q, dtype=float)
    if np.any(np.abs(q) > 1.0 / 12.0 + 1e-16):
        raise DomainError("spearman_map_inverse requires |q| <= 1/12")
    return _scalar_or_array(np.clip(2.0 * np.sin(2.0 * math.pi * q), -1.0, 1.0))


def kendall_map(rho):
    """Kendall's tau of the normal copula, 2 arcsin(rho) / pi (reference only)."""
    rho = np.asarray(rho, dtype=float)
    if np.any(np.abs(rho) > 1.0):
        raise DomainError("kendall_map requires |rho| <= 1")
    return _scalar_or_array(2.0 * np.arcsin(rho) / math.pi)
