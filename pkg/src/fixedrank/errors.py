"""Exception types shared across the package."""


class FixedRankError(Exception):
    """Base class for all package-specific errors."""


class InvalidInputError(FixedRankError, ValueError):
    """Input violates a documented precondition (shape, range, finiteness)."""


class ResourceLimitError(FixedRankError):
    """A size guard on an explicit dense assembly was exceeded."""


class RankDeficiencyError(FixedRankError):
    """A rank-r factorization step produced a numerically rank-deficient result."""


class SingularCoreError(FixedRankError):
    """The r-by-r core of an orthographic retraction is numerically singular."""


class UnmeasuredDirectionError(FixedRankError):
    """A nonzero search direction lies in the null space of the measurement map."""


class DegenerateSpectrumError(FixedRankError):
    """All eigenvalues of the projected measurement matrix fall below the zero cutoff."""
