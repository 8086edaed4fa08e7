"""
Exception types raised by the toolkit.

Every class derives from a builtin (ValueError or ArithmeticError) so callers
that only catch the builtin keep working.
"""


class ConfigurationError(ValueError):
    """
    A configuration or parameter combination the toolkit cannot run.
    """


class DomainError(ValueError):
    """
    An argument outside the domain of an operation.
    """


class DimensionError(ValueError):
    """
    Partitions of incompatible sizes.
    """


class ConsistencyError(ValueError):
    """
    Inputs that contradict each other (e.g. jump sizes that do not add up to a total).
    """


class NumericalIntegrationError(ArithmeticError):
    """
    A quadrature did not converge to the requested tolerance.
    """


class ClassificationError(ArithmeticError):
    """
    Quadrature or root finding failed while classifying a branching mechanism.
    """


class BlowUpError(ArithmeticError):
    """
    The cumulant ODE escaped to +infinity before the requested time.
    """

    def __init__(self, escape_time: float, message: str | None = None) -> None:
        self.escape_time = escape_time
        super().__init__(message or f"u_t escaped to infinity at t={escape_time:.6g}")
