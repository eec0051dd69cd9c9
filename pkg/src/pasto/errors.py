"""Exception types shared across the package."""


class PastoError(Exception):
    """Base class for all package errors."""


class ConfigError(PastoError):
    """Invalid configuration: bad schema, types, or value ranges."""


class DimensionMismatchError(PastoError):
    """Operands have incompatible shapes or a metric index is out of range."""


class EmptyVectorError(PastoError):
    """A vector or matrix argument has no entries."""


class NegativeEntryError(PastoError):
    """An entry violates a nonnegativity (or strict positivity) requirement."""


class ZeroSumError(PastoError):
    """A vector that must normalize to a distribution sums to zero."""


class NonFiniteEntryError(PastoError):
    """NaN or infinity where finite values are required."""


class NonDifferentiableObjectiveError(PastoError):
    """A gradient was requested for an objective with hard-barrier guardrails."""


class ZeroProbabilityError(PastoError):
    """An observation's sampling probability lies outside (0, 1]."""


class ArmOutOfRangeError(PastoError):
    """An arm index lies outside [0, K)."""


class InvalidEpsilonError(PastoError):
    """Smoothing amount outside the accepted range."""


class NonFiniteGradientError(PastoError):
    """A gradient vector contains NaN or infinity."""


class DegenerateGapError(PastoError):
    """Relative gain is undefined: probabilistic and single-best optima coincide."""
