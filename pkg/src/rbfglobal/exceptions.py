"""Exception types shared across the package."""


class InvalidPointError(ValueError):
    """A point violates the variable bounds, integrality or unary constraints."""


class DuplicateNodeError(ValueError):
    """Two interpolation nodes coincide (within tolerance)."""


class UnsolvableSystemError(RuntimeError):
    """The interpolation system cannot be solved even in the least-squares
    sense; the caller should run the restoration procedure."""


class DesignError(RuntimeError):
    """The initial design generator exhausted its regeneration attempts."""


class SearchError(RuntimeError):
    """The auxiliary search could not produce a usable candidate point."""
