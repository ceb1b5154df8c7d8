"""Exception types raised across the mixcraft pipeline."""


class MixtureError(Exception):
    """Base class for all library-specific failures."""


class NotPositiveDefinite(MixtureError):
    """A matrix that must be positive definite failed its Cholesky check.

    Doubles as the degeneracy signal for collapsed component covariances;
    the optional ``component`` records which mixture component collapsed.
    """

    def __init__(self, message="matrix is not positive definite", component=None):
        super().__init__(message)
        self.component = component


class ZeroVariance(MixtureError):
    """A marginal with zero spread where positive variance is required."""


class DimensionMismatch(MixtureError):
    """Operands disagree on dimensionality."""


class ParseError(MixtureError):
    """Malformed numeric input; ``row`` and ``col`` are zero-based."""

    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


class RaggedRows(ParseError):
    """CSV rows of inconsistent width."""


class ClassTooSmall(MixtureError):
    """A class with fewer members than a stratified split requires."""

    def __init__(self, label, count):
        super().__init__(f"class {label} has only {count} member(s); need at least 2")
        self.label = label
        self.count = count


class DegenerateRange(MixtureError):
    """A dimension whose minimum equals its maximum cannot be binned."""


class DuplicatePointsExceedK(MixtureError):
    """The k-th nearest neighbour sits at distance zero (too many duplicates)."""


class EmptySelection(MixtureError):
    """No unassigned bins or points remain for the requested operation."""


class InvalidBracket(MixtureError):
    """Golden-section bracket whose middle point does not undercut the ends."""


class ZeroDensity(MixtureError):
    """Mixture density underflowed to zero at some evaluation point."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class InsufficientN(MixtureError):
    """Sample too small for the requested criterion (AICc needs n > M + 1)."""


class SingularConditional(MixtureError):
    """Empirical conditional density at the mode vanished."""


class InsufficientSupport(MixtureError):
    """Component support too small for maximum-likelihood refinement."""


class LengthMismatch(MixtureError):
    """Paired sequences of different lengths."""
