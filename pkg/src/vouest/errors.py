class VouError(Exception):
    """Base class for all package errors."""


class DomainError(VouError, ValueError):
    """Argument outside the mathematical domain (t <= 0, beta >= 0, ...)."""


class UsageError(VouError, ValueError):
    """Inputs that are individually valid but inconsistent (non-nesting grids, z0 != 0)."""


class ConfigError(VouError, ValueError):
    """Configuration file could not be parsed or failed validation."""


class NumericalError(VouError, ArithmeticError):
    """A numerical procedure failed (negative resolvent mass, non-PD covariance)."""


class DegeneratePathError(NumericalError):
    """Estimator denominator vanished, e.g. on a constant path."""


class PlanningError(VouError, ValueError):
    """No partition within the search limits meets the mesh conditions."""
