"""
Exception hierarchy for the fusion app.

Every error raised by the numerical modules derives from FusionError. Errors caused
by bad user input additionally derive from InputError so the management commands can
map them to exit code 2.
"""


class FusionError(Exception):
    """Base class for all solver errors."""


class InputError(FusionError):
    """Raised for malformed or inconsistent user input."""


# -----------------------------------------------------------------------------
# Linear algebra
# -----------------------------------------------------------------------------

class NotPositiveDefinite(FusionError):
    """A matrix expected to be positive-definite is not (to tolerance)."""

    def __init__(self, pivot=None, message=None):
        self.pivot = pivot
        if message is None:
            message = "matrix is not positive-definite"
            if pivot is not None:
                message += f" (pivot {pivot})"
        super().__init__(message)


class NoConvergence(FusionError):
    """The symmetric eigensolver failed to converge."""


class SingularUpdate(FusionError):
    """A rank-one update would make the matrix singular."""


class DegenerateSpectrum(FusionError):
    """The spectrum has fewer positive eigenvalues than the budget requires."""


# -----------------------------------------------------------------------------
# Instances and I/O
# -----------------------------------------------------------------------------

class BadDimensions(InputError):
    """C and A have incompatible shapes."""


class BadBudget(InputError):
    """The budget s is outside 1..n."""


class ParseError(InputError):
    """An instance or config file could not be parsed."""


class DimensionMismatch(InputError):
    """A matrix read from file has the wrong shape."""


class BadInit(InputError):
    """An initial selection is not a cardinality-s subset of [n]."""


# -----------------------------------------------------------------------------
# Algorithms
# -----------------------------------------------------------------------------

class InfeasibleFixing(FusionError):
    """Fixed-in / fixed-out sets leave no feasible completion."""


class InsufficientSupport(FusionError):
    """A fractional point has fewer than s positive entries."""


class Contradiction(FusionError):
    """Variable fixings contradict the budget; the lower bound is invalid or numerics failed."""


class TooLarge(FusionError):
    """Enumeration was requested for too many subsets."""
