"""Exception types shared across the package."""


class MemsparseError(Exception):
    """Base class for all package errors."""


class ShapeError(MemsparseError, ValueError):
    """Operand dimensions do not agree."""


class DomainError(MemsparseError, ValueError):
    """Input outside the operation's domain (empty, non-finite, ...)."""


class BudgetError(MemsparseError, ValueError):
    """A selection budget cannot be honoured."""


class CapacityError(MemsparseError, ValueError):
    """Context too small for the requested task layout."""


class ConfigError(MemsparseError, ValueError):
    """Invalid or unparseable experiment configuration."""
