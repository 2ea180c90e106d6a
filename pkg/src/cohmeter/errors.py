"""Exception types raised by cohmeter.

All domain errors derive from :class:`CohmeterError`, itself a ``ValueError``
so callers that only care about bad input can catch the builtin.
"""


class CohmeterError(ValueError):
    """Base class for every domain error."""


class InvalidState(CohmeterError):
    """A state or density matrix violates its invariants."""


class NonNormalizedProbabilities(CohmeterError):
    pass


class InvalidRank(CohmeterError):
    """Requested coherence order k is outside the admissible range."""


class RankTooLow(CohmeterError):
    """State is less coherent than the requested order."""


class DimensionMismatch(CohmeterError):
    pass


class NotTracePreserving(CohmeterError):
    pass


class IndexOutOfRange(CohmeterError):
    pass


class SameSite(CohmeterError):
    pass


class InvalidGamma(CohmeterError):
    pass


class DimensionTooLarge(CohmeterError):
    pass


class ExplosionGuard(CohmeterError):
    """Kraus set grew beyond the configured cap during composition."""


class AsymmetricCoupling(CohmeterError):
    pass


class NegativeRate(CohmeterError):
    pass


class StepTooLarge(CohmeterError):
    """Integrator trace drift per step exceeded tolerance."""
