"""Exception and warning types shared across the package."""


class DmdError(Exception):
    """Base class for all errors raised by dmdkit."""


class NonUniformSampling(DmdError):
    """Sample times are not uniformly spaced where uniform spacing is required."""


class RankTooLarge(DmdError):
    """Requested truncation rank exceeds what the matrix supports."""


class InvalidRank(DmdError):
    """Requested model rank is incompatible with the data dimensions."""


class DegenerateEigenproblem(DmdError):
    """Eigendecomposition of the reduced operator failed to converge."""


class ZeroReference(DmdError):
    """Relative error is undefined against a zero reference matrix."""


class EigenvalueOverflow(DmdError):
    """exp(Re(omega) * t) would overflow double precision."""


class InvalidBagSize(DmdError):
    """Bag size p is outside the valid range for m snapshots."""


class TooFewAcceptedTrials(DmdError):
    """Fewer than two bagging trials converged and passed rejection."""


class InsufficientModels(DmdError):
    """Ensemble statistics need at least two models."""


class ShapeMismatch(DmdError):
    """Array shapes do not agree."""


class ParseError(DmdError):
    """A CSV cell failed to parse.

    Carries 1-based ``line`` and ``column`` of the offending cell.
    """

    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)
        self.line = line
        self.column = column


class RaggedRows(DmdError):
    """A CSV row has a different number of values than the header."""


class NonIncreasingTimes(DmdError):
    """Sample times in a file header are not strictly increasing."""


class RankDeficiencyWarning(UserWarning):
    """Trailing singular values fell below the relative cutoff."""
