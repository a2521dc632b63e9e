"""Exception types shared across the package."""


class LqacError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(LqacError):
    """Matrix/vector shapes are inconsistent with the system dimensions."""


class NotStabilizable(LqacError):
    """The pair (A, B) fails the Hautus stabilizability test."""


class NoConvergence(LqacError):
    """Fixed-point iteration did not reach the requested tolerance."""


class NotStable(LqacError):
    """A matrix required to have spectral radius < 1 does not."""


class SingularClosedLoop(LqacError):
    """A + B K is rank deficient, voiding the gain-Jacobian rank guarantee."""


class UnstableK0(LqacError):
    """The configured fallback controller K0 does not stabilize the system."""


class SingularGram(LqacError):
    """The Gram matrix is singular where an inverse is required."""


class SingularWeight(LqacError):
    """The weight matrix of a confidence region is numerically singular."""


class HorizonExceeded(LqacError):
    """A step index beyond the recorded horizon was requested."""


class DomainError(LqacError):
    """A scalar argument lies outside its mathematical domain."""


class InsufficientPoints(LqacError):
    """Too few data points inside the requested fit window."""


class IoError(LqacError):
    """Failure writing experiment outputs."""


class SchemaError(LqacError):
    """A plan file or CSV does not match the documented schema."""
