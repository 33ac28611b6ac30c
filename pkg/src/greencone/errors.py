"""Exception types for the numerical failure modes shared across modules."""


class GreenconeError(Exception):
    """Base class for all package-specific failures."""


class DimensionMismatch(GreenconeError, ValueError):
    """Operands have incompatible dimensions."""


class NegativeInnerProduct(GreenconeError, ValueError):
    """The nonneg-splitting construction requires y1.y2 >= 0."""


class RankDetectionAmbiguous(GreenconeError):
    """Eigenvalues of S2 - S1 straddle the rank threshold; refusing to guess."""


class SingularMatrix(GreenconeError):
    """A matrix required to be invertible is numerically singular."""


class NotPositiveDefinite(GreenconeError, ValueError):
    """A matrix required to be positive definite is not."""


class IntegratorFailure(GreenconeError):
    """The adaptive integrator could not meet its local tolerance."""


class BlowUp(GreenconeError):
    """Momentum norm exceeded the configured bound during integration."""


class ConjugatePoint(GreenconeError):
    """Transported vertical lost transversality to the vertical (graph extraction singular)."""


class NonConvergence(GreenconeError):
    """Iteration failed to reach its tolerance within the allowed budget."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class EmptyWindow(GreenconeError):
    """No sample pair falls inside the requested scale window."""


class ConfigError(GreenconeError, ValueError):
    """Invalid experiment configuration."""
