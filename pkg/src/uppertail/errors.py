"""Exception types shared across the package."""


class UppertailError(Exception):
    """Base class for package errors."""


class DimensionError(UppertailError, ValueError):
    pass


class OrderingError(UppertailError, ValueError):
    """Endpoints are not ordered componentwise."""


class RangeError(UppertailError, ValueError):
    pass


class DomainError(UppertailError, ValueError):
    pass


class NearSingularError(DomainError):
    """Parameter too close to a singular point of an integrand."""


class ConstraintError(UppertailError, ValueError):
    pass


class ParityError(UppertailError, ValueError):
    pass


class ConditioningError(UppertailError, ArithmeticError):
    pass


class WindowError(UppertailError, ValueError):
    pass


class NumericError(UppertailError, ArithmeticError):
    def __init__(self, message, seed=None):
        super().__init__(message if seed is None else f"{message} (seed={seed})")
        self.seed = seed


class ToleranceNotMet(UppertailError, ArithmeticError):
    """Quadrature could not reach the requested tolerance."""

    def __init__(self, message, estimate, error):
        super().__init__(f"{message}: best estimate {estimate!r} +/- {error:.3g}")
        self.estimate = estimate
        self.error = error


class BudgetError(UppertailError, RuntimeError):
    """A rare-event run cannot produce samples within its budget."""

    def __init__(self, message, pilot_estimate=None):
        if pilot_estimate is not None:
            message = f"{message} (pilot estimate {pilot_estimate:.3g})"
        super().__init__(message)
        self.pilot_estimate = pilot_estimate


class SchemaError(UppertailError, ValueError):
    pass


class ConfigError(UppertailError, ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
