"""Exception types raised across the package."""


class HeritCurvesError(Exception):
    """Base class for all package errors."""

    code = "error"


class DefinitenessError(HeritCurvesError, ValueError):
    """A covariance or correlation matrix is not positive definite."""

    code = "not_positive_definite"


class DataError(HeritCurvesError, ValueError):
    """Input data is missing columns, empty, or otherwise unusable."""

    code = "data_error"


class OptimizationError(HeritCurvesError, RuntimeError):
    """Every optimization start failed.

    ``diagnostics`` holds one entry per start.
    """

    code = "optimization_failure"

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])


class InferenceUnavailableError(HeritCurvesError, RuntimeError):
    """The Hessian at the optimum is singular or indefinite."""

    code = "inference_unavailable"


class BootstrapUnreliableError(HeritCurvesError, RuntimeError):
    """Too many bootstrap replicates failed to converge."""

    code = "bootstrap_unreliable"

    def __init__(self, message, failures=0, B=0):
        super().__init__(message)
        self.failures = failures
        self.B = B
