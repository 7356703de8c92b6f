"""Exception hierarchy.

The CLI maps these onto exit codes, so every error raised by the library
derives from :class:`RenewalLDPError`.
"""


class RenewalLDPError(Exception):
    """Base class for all library errors."""


class ModelError(RenewalLDPError, ValueError):
    """A joint law of (tau, W) is malformed."""


class ParameterError(RenewalLDPError, ValueError):
    """An operation parameter is outside its allowed range."""


class HypothesisViolation(RenewalLDPError):
    """The exponential-moment hypotheses ``theta0 > 0`` and ``eta0 > 0`` fail."""


class UnsupportedMomentError(RenewalLDPError):
    """A required moment is infinite or cannot be computed."""


class ModelPathologyError(RenewalLDPError, RuntimeError):
    """A simulation ran away (too many renewals or events)."""


class InsufficientCyclesError(RenewalLDPError):
    """Too few regeneration cycles were observed on a Hawkes path."""


class InsufficientEventsError(RenewalLDPError):
    """No Monte Carlo replication hit the rare event."""


class SchemaError(RenewalLDPError, ValueError):
    """Two artifacts cannot be compared or a file does not match its schema."""
