"""Exception types shared across the library."""


class CrossDetectError(Exception):
    """Base class for all library errors."""


class NotPositiveDefinite(CrossDetectError):
    """Cholesky factorization hit a non-positive pivot."""


class DimensionMismatch(CrossDetectError):
    """Operands have incompatible shapes."""


class EmptyBatch(CrossDetectError):
    """A snapshot batch with zero snapshots was supplied."""


class DegenerateSnapshot(CrossDetectError):
    """A snapshot produced a zero or negative texture/power estimate."""


class NoConvergence(CrossDetectError):
    """Fixed-point iteration did not reach tolerance.

    Carries the last iterate so callers can inspect or accept it.
    """

    def __init__(self, message, estimate=None, final_rel_dev=None):
        super().__init__(message)
        self.estimate = estimate
        self.final_rel_dev = final_rel_dev


class NoiseFloorZero(CrossDetectError):
    """Snapshot energy is below the scale-aware floor."""


class SingularGram(CrossDetectError):
    """The steering Gram matrix P^H C^-1 P is not invertible."""


class IncompatiblePair(CrossDetectError):
    """Requested detector/estimator combination is not meaningful."""


class ConfigError(CrossDetectError):
    """Invalid experiment configuration."""


class WindowTooSmall(CrossDetectError):
    """Sliding secondary window cannot be satisfied by the data."""
