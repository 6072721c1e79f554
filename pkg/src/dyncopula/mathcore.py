"""Scalar special functions, adaptive quadrature and seeded random streams.

Everything here is deterministic given its inputs. Random numbers come from
numpy's PCG64 bit generator seeded through ``SeedSequence(seed,
spawn_key=(stream_id,))``; that choice is fixed for this release so seeded
outputs stay reproducible.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from .exceptions import ConfigError, DomainError, QuadratureError

__all__ = [
    "QuadratureSpec",
    "RngStream",
    "integrate",
    "sample_std_normal",
    "std_normal_cdf",
    "std_normal_pdf",
    "std_normal_quantile",
]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def std_normal_cdf(x):
    """Standard normal distribution function, saturating to 0/1 in the tails."""
    return special.ndtr(x)


def std_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def std_normal_quantile(p):
    """Inverse of :func:`std_normal_cdf` on the open interval (0, 1).

    Raises
    ------
    DomainError
        If any ``p`` is outside (0, 1).
    """
    arr = np.asarray(p, dtype=float)
    if np.any(~(arr > 0.0)) or np.any(~(arr < 1.0)):
        raise DomainError("std_normal_quantile requires 0 < p < 1")
    out = special.ndtri(arr)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerance and subdivision cap for :func:`integrate`.

    ``max_depth`` bounds how often any one panel may be bisected; the total
    number of bisections is further capped at ``200 * max_depth`` so that a
    noisy integrand fails quickly instead of refining without end.
    """

    abs_tol: float = 1e-10
    max_depth: int = 50

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ConfigError(f"abs_tol must be positive, got {self.abs_tol}")
        if self.max_depth < 10:
            raise ConfigError(f"max_depth must be >= 10, got {self.max_depth}")


# Gauss-Kronrod 7/15 nodes and weights on [-1, 1] (QUADPACK qk15).
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KWEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss nodes are the odd-indexed Kronrod nodes (1, 3, 5, 7 counted from the ends).
_GWEIGHTS = np.zeros(15)
_GWEIGHTS[[1, 3, 5]] = _WG[:3]
_GWEIGHTS[[13, 11, 9]] = _WG[:3]
_GWEIGHTS[7] = _WG[3]


def _panel(f, a, b):
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    fx = np.asarray(f(mid + half * _NODES), dtype=float)
    if fx.shape != _NODES.shape:
        fx = np.broadcast_to(fx, _NODES.shape)
    if not np.all(np.isfinite(fx)):
        raise QuadratureError(f"integrand is not finite on [{a}, {b}]")
    kronrod = half * float(_KWEIGHTS @ fx)
    gauss = half * float(_GWEIGHTS @ fx)
    return kronrod, abs(kronrod - gauss)


def integrate(f: Callable, a: float, b: float, spec: QuadratureSpec | None = None) -> float:
    """Globally adaptive Gauss-Kronrod (7, 15) quadrature of ``f`` over [a, b].

    ``f`` must accept a numpy array of abscissae and return an array of the
    same shape. The panel with the largest error estimate is bisected until the
    summed estimate drops below ``spec.abs_tol``.

    Raises
    ------
    QuadratureError
        When a panel would need to be split beyond ``spec.max_depth`` levels,
        or the total bisection budget is spent.
    """
    spec = spec or QuadratureSpec()
    if not a < b:
        raise DomainError(f"integrate requires a < b, got [{a}, {b}]")
    value, err = _panel(f, a, b)
    # heap of (-error, tiebreak, a, b, value, depth)
    heap = [(-err, 0, a, b, value, 0)]
    total_value, total_err = value, err
    counter = 1
    while total_err > spec.abs_tol:
        neg_err, _, lo, hi, val, depth = heapq.heappop(heap)
        if depth >= spec.max_depth or counter > 400 * spec.max_depth:
            raise QuadratureError(
                f"no convergence within {spec.max_depth} subdivision levels "
                f"(estimate {total_value!r}, error {total_err:.3g})",
                estimate=total_value,
                error=total_err,
            )
        mid = 0.5 * (lo + hi)
        v1, e1 = _panel(f, lo, mid)
        v2, e2 = _panel(f, mid, hi)
        total_value += v1 + v2 - val
        total_err += e1 + e2 + neg_err
        heapq.heappush(heap, (-e1, counter, lo, mid, v1, depth + 1))
        heapq.heappush(heap, (-e2, counter + 1, mid, hi, v2, depth + 1))
        counter += 2
    # re-sum from the panels to shed accumulated update round-off
    return math.fsum(item[4] for item in heap)


@dataclass(frozen=True)
class RngStream:
    """An addressable, replayable random stream.

    Streams with different ``(seed, stream_id)`` are statistically
    independent; :meth:`generator` always returns a fresh generator positioned
    at the start of the stream.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            value = getattr(self, name)
            if not 0 <= int(value) < 2**64:
                raise ConfigError(f"{name} must be a 64-bit unsigned integer, got {value}")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.PCG64(seq))

    def substream(self, index: int) -> "RngStream":
        """Stream keyed by ``index``, for example one per Monte-Carlo replication."""
        # mix the parent stream id in so substreams of different parents differ
        return RngStream(self.seed, (int(self.stream_id) * 1_000_003 + int(index) + 1) % 2**64)


def sample_std_normal(stream: RngStream, count: int) -> np.ndarray:
    if count < 0:
        raise ConfigError(f"count must be non-negative, got {count}")
    return stream.generator().standard_normal(count)
