"""Exception hierarchy shared by all gibbslab modules."""


class GibbsLabError(Exception):
    """Base class for every error raised by the package."""


class DomainError(GibbsLabError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ConfigError(GibbsLabError, ValueError):
    """Invalid or inconsistent configuration."""


class ResourceError(GibbsLabError, MemoryError):
    """Requested computation exceeds the configured size budget."""

    def __init__(self, message, required=None):
        super().__init__(message)
        self.required = required


class NumericError(GibbsLabError, ArithmeticError):
    """An iterative method failed to converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class UnsupportedRegimeError(GibbsLabError, ValueError):
    """Variation or convergence profile outside the supported decay regimes."""


class InsufficientDataError(GibbsLabError, ValueError):
    pass


class DegenerateMeasureError(GibbsLabError, ValueError):
    pass


class EstimationFailure(GibbsLabError, RuntimeError):
    pass
