"""Exception hierarchy shared by all modules."""


class IllBilevelError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(IllBilevelError, ValueError):
    """Vector or matrix sizes do not agree."""


class LimitExceeded(IllBilevelError, ValueError):
    """A size cap guarding exact arithmetic was exceeded."""


class PrecisionExhausted(IllBilevelError):
    """Signs could not be certified below the configured precision cap."""

    def __init__(self, message, precision):
        super().__init__(message)
        self.precision = precision


class InconclusiveEnclosure(IllBilevelError):
    """An enclosure straddles zero where a strict sign is required."""

    def __init__(self, message, constraint=None):
        super().__init__(message)
        self.constraint = constraint


class EpsBelowThreshold(IllBilevelError, ValueError):
    """The tolerance is too small for the constructed eps-feasible point."""

    def __init__(self, eps, threshold):
        super().__init__(
            f"eps = {eps} is below the admissible threshold 2^(-2^(n-1)) = {threshold}"
        )
        self.eps = eps
        self.threshold = threshold


class HypothesisViolation(IllBilevelError):
    """A required near-feasibility condition does not hold.

    ``condition`` names the failing hypothesis, e.g. ``"dual near-feasibility"``.
    """

    def __init__(self, condition, message):
        super().__init__(f"condition {condition} violated: {message}")
        self.condition = condition


class AssumptionViolation(IllBilevelError):
    """A standing assumption on a linear bilevel instance fails."""

    def __init__(self, assumption, message):
        super().__init__(f"{assumption}: {message}")
        self.assumption = assumption


class CertificateError(IllBilevelError):
    """An internal exact verification failed (indicates a bug or bad data)."""
