"""
Exception types raised by sclt.

Every class derives from a builtin so callers that only catch ``ValueError``,
``RuntimeError`` or ``ArithmeticError`` keep working.
"""

from typing_extensions import Any, Mapping, Optional


class DomainError(ValueError):
    """An argument lies outside the domain of the function it was passed to."""


class CapacityError(ValueError):
    """
    A sieve, factorization, enumeration or quadrature budget was exceeded.

    :param message: human readable description
    :param requested: the size that was asked for
    :param capacity: the configured limit
    """

    def __init__(self, message: str, requested: Any = None, capacity: Any = None):
        super().__init__(message)
        self.requested = requested
        self.capacity = capacity


class PrecisionError(ArithmeticError):
    """Phase reduction would lose more precision than the fixed-point budget allows."""


class DegenerateParametersError(ValueError):
    """
    The derived parameters violate 13 < Y < X < T.

    :param message: human readable description
    :param values: the computed parameter values
    """

    def __init__(self, message: str, values: Optional[Mapping[str, float]] = None):
        super().__init__(message)
        self.values = dict(values or {})


class EmptyRangeError(ValueError):
    """A prime range that an operation needs (usually 13 < p <= Y) contains no primes."""


class PreconditionError(RuntimeError):
    """
    A mathematical precondition failed: a non positive-definite covariance, an
    inadmissible perturbation or an under-resolved quadrature.

    :param message: human readable description
    :param required_nodes: for quadrature refusals, the node count that would be accepted
    """

    def __init__(self, message: str, required_nodes: Optional[int] = None):
        super().__init__(message)
        self.required_nodes = required_nodes


class ConfigError(ValueError):
    """The experiment configuration is malformed."""
