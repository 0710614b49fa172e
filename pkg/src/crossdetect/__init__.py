"""Dual-array adaptive sonar detection library.

Detection statistics for a Mills-cross (two crossed ULAs) receiver under
mixture-of-scaled-Gaussian clutter, robust covariance estimation, and a
Monte-Carlo experiment harness with a CLI front end.
"""

from . import clutter, cube, detectors, estimators, harness, hermitian, scene
from .errors import (
    ConfigError,
    CrossDetectError,
    DegenerateSnapshot,
    DimensionMismatch,
    EmptyBatch,
    IncompatiblePair,
    NoConvergence,
    NoiseFloorZero,
    NotPositiveDefinite,
    SingularGram,
    WindowTooSmall,
)

__version__ = "0.1.0"
