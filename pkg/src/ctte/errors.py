"""Exception types shared across the package."""


class CtteError(Exception):
    """Base class for all package errors."""


class ValidationError(CtteError):
    """A value or configuration field violates its documented invariant.

    ``field`` names the offending parameter so CLI callers can report it.
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class DomainError(CtteError):
    """An argument lies outside the domain of an operation."""


class OrderingViolation(CtteError):
    """Event times are not strictly increasing."""


class BipartiteViolation(CtteError):
    """The same event time appears in both channels of a joint record."""


class MissingHistoryError(CtteError):
    """Required pre-interval history is unavailable and no prior was declared."""


class SingularRatioError(CtteError):
    """A modeled rate is zero (or negative) at an observed event time."""

    def __init__(self, t, message=None):
        self.t = t
        super().__init__(message or f"singular rate ratio at event time t={t!r}")


class QuadratureError(CtteError):
    """Adaptive quadrature failed to meet its tolerance."""


class InsufficientSamplesError(CtteError):
    """A Monte Carlo denominator is indistinguishable from zero."""
