"""Normal copula with a correlation drifting along the sample.

Observation ``i`` of ``n`` has correlation ``1 - m(i/n) / log n``. The
package simulates such samples, evaluates the limit law of their
componentwise maxima, estimates ``m`` parametrically and by local-linear
smoothing, and replicates the accompanying Monte-Carlo study.
"""

from .copula import CorrelationPath, PairedSample, build_schedule, sample_array
from .exceptions import (
    ConfigError,
    ConvergenceError,
    DomainError,
    DynCopulaError,
    NumericalError,
    QuadratureError,
    SingularMatrixError,
)
from .limits import LimitLaw, limit_cdf, tail_coefficient, tail_dependence_fn
from .mathcore import QuadratureSpec, RngStream
from .nonparametric import EPANECHNIKOV, Kernel, fit_m_curve, practical_bandwidth
from .parametric import asymptotic_report, fit_constant, fit_linear, fit_power, hotelling_test

__version__ = "0.1.0"

__all__ = [
    "EPANECHNIKOV",
    "ConfigError",
    "ConvergenceError",
    "CorrelationPath",
    "DomainError",
    "DynCopulaError",
    "Kernel",
    "LimitLaw",
    "NumericalError",
    "PairedSample",
    "QuadratureError",
    "QuadratureSpec",
    "RngStream",
    "SingularMatrixError",
    "asymptotic_report",
    "build_schedule",
    "fit_constant",
    "fit_linear",
    "fit_m_curve",
    "fit_power",
    "hotelling_test",
    "limit_cdf",
    "practical_bandwidth",
    "sample_array",
    "tail_coefficient",
    "tail_dependence_fn",
]
