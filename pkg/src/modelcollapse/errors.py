"""Exception types shared across the package."""
from __future__ import annotations


class InvalidArgumentError(ValueError):
    pass


class UnsupportedOperationError(ValueError):
    pass


class PreconditionError(RuntimeError):
    pass


class ResourceLimitError(RuntimeError):
    """Raised when an exact computation would exceed its size guard."""


class NumericalError(RuntimeError):
    pass
