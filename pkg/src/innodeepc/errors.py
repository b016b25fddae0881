"""Exception hierarchy used across the package.

Every raised error falls into one of a few coarse categories so callers can
distinguish bad arguments from genuine numerical trouble.
"""


class InnoDeepcError(Exception):
    """Base class for all package errors."""


class InputError(InnoDeepcError, ValueError):
    """Malformed arguments: dimension mismatches, invalid options, bad files."""


class PreconditionError(InputError):
    """Data does not satisfy a documented precondition (e.g. too short for
    the requested persistency-of-excitation order)."""


class StructuralError(InnoDeepcError, RuntimeError):
    """The problem instance lacks required structure (e.g. a singular matrix
    pencil where a regular one is needed)."""


class RankAmbiguityError(StructuralError):
    """A rank decision had singular values too close to the threshold to be
    trusted.  Carries the borderline values for inspection."""

    def __init__(self, message, borderline=()):
        super().__init__(message)
        self.borderline = tuple(float(s) for s in borderline)


class ConditioningError(InnoDeepcError, RuntimeError):
    """A linear solve or factorization was too ill-conditioned to trust."""


class ConvergenceError(InnoDeepcError, RuntimeError):
    """An iterative routine exhausted its iteration budget."""
