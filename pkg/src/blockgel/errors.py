"""Exception hierarchy shared by the estimation, inference and CLI layers."""


class GelError(Exception):
    """Base class for all package errors."""


class ConfigurationError(GelError, ValueError):
    """Invalid user configuration (block geometry, dimensions, test preconditions)."""


class DataError(GelError, ValueError):
    """Malformed or unusable input data."""


class NumericalDomainError(GelError, ArithmeticError):
    """A moment function produced a non-finite value inside a block.

    ``q`` and ``t`` are 1-based block and time indices of the first offending
    entry.
    """

    def __init__(self, message, q=None, t=None):
        super().__init__(message)
        self.q = q
        self.t = t


class EstimationError(GelError, RuntimeError):
    """The optimizer could not produce any usable iterate."""
