"""Exception hierarchy shared by the library and the command line."""


class DynCopulaError(Exception):
    """Base class for all errors raised by :mod:`dyncopula`."""


class ConfigError(DynCopulaError, ValueError):
    """Invalid user input: bad parameters, malformed files, domain violations."""


class DomainError(ConfigError):
    """An argument lies outside the domain of a function."""


class NumericalError(DynCopulaError, ArithmeticError):
    """A numerical procedure failed to reach its tolerance."""


class QuadratureError(NumericalError):
    """Adaptive quadrature hit its subdivision cap before converging."""

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class ConvergenceError(NumericalError):
    """A root finder did not converge; ``best`` holds the best iterate found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class SingularMatrixError(NumericalError):
    """A covariance or design matrix could not be inverted."""
