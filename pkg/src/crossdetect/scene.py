"""Geometry and signal model for the crossed-array scene.

Two uniform linear arrays of m sensors each, laid out on an integer grid
and crossing at their centers: array-1 sensor n sits at (n, c) and
array-2 sensor n at (c, n), with c = (m - 1) / 2.  Only coordinate
differences enter the covariance model, so the half-integer crossing
coordinate is harmless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import hermitian
from .errors import DimensionMismatch

NEG_INF_DB = float("-inf")


@dataclass(frozen=True)
class ArrayGeometry:
    """Crossed-ULA sensor layout; m sensors per array."""

    m: int = 64

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"m must be positive, got {self.m}")

    @property
    def cross(self) -> float:
        return (self.m - 1) / 2.0

    def coordinates(self) -> np.ndarray:
        """(2m, 2) array of sensor coordinates, array 1 first."""
        n = np.arange(self.m, dtype=float)
        c = np.full(self.m, self.cross)
        a1 = np.column_stack([n, c])
        a2 = np.column_stack([c, n])
        return np.vstack([a1, a2])


@dataclass(frozen=True)
class CovarianceModelParams:
    """Parameters of the separable-exponential speckle covariance model."""

    beta: float = 3e-4
    rho1: float = 0.4
    rho2: float = 0.9
    zero_cross_blocks: bool = False

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        for name, rho in (("rho1", self.rho1), ("rho2", self.rho2)):
            if not 0.0 < rho < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {rho}")


def build_covariance(geom: ArrayGeometry, params: CovarianceModelParams) -> np.ndarray:
    """2m x 2m real-symmetric covariance from the separable model.

    Entry (j, l) is beta * rho1^|j1-l1| * rho2^|j2-l2| with sensor
    coordinates (j1, j2), (l1, l2).  Positive definiteness is verified by
    Cholesky and a failure is raised as NotPositiveDefinite.
    """
    coords = geom.coordinates()
    d1 = np.abs(coords[:, 0, None] - coords[None, :, 0])
    d2 = np.abs(coords[:, 1, None] - coords[None, :, 1])
    mat = params.beta * params.rho1**d1 * params.rho2**d2
    if params.zero_cross_blocks:
        m = geom.m
        mat[:m, m:] = 0.0
        mat[m:, :m] = 0.0
    hermitian.cholesky_factor(mat)  # PD check; invalid params surface here
    return mat


def steering_vector(m: int, theta_deg: float) -> np.ndarray:
    """Unit-norm half-wavelength ULA steering vector.

    p[n] = exp(i pi n sin(theta)) / sqrt(m).
    """
    if abs(theta_deg) > 90.0:
        raise ValueError(f"|theta| must be <= 90 deg, got {theta_deg}")
    n = np.arange(m)
    phase = math.pi * math.sin(math.radians(theta_deg))
    return np.exp(1j * phase * n) / math.sqrt(m)


def assemble_steering(p1: np.ndarray, p2: np.ndarray) -> np.ndarray:
    """Block-diagonal 2m x 2 steering matrix [p1 0; 0 p2]."""
    p1 = np.asarray(p1)
    p2 = np.asarray(p2)
    if p1.shape != p2.shape or p1.ndim != 1:
        raise DimensionMismatch(
            f"steering vectors must be equal-length 1-D, got {p1.shape} and {p2.shape}"
        )
    m = p1.shape[0]
    mat = np.zeros((2 * m, 2), dtype=complex)
    mat[:m, 0] = p1
    mat[m:, 1] = p2
    return mat


def steering_for_angles(m: int, theta1_deg: float, theta2_deg: float) -> np.ndarray:
    """Steering matrix for a (theta1, theta2) pointing of the two arrays."""
    return assemble_steering(steering_vector(m, theta1_deg), steering_vector(m, theta2_deg))


def snr_db(alpha, steering: np.ndarray, covariance: np.ndarray) -> float:
    """Whitened output SNR 10 log10(alpha^H P^H M^-1 P alpha) in dB."""
    alpha = np.asarray(alpha, dtype=complex)
    wp = hermitian.solve_hpd(covariance, steering)
    gram = steering.conj().T @ wp
    power = float(np.real(alpha.conj() @ gram @ alpha))
    if power <= 0.0:
        return NEG_INF_DB
    return 10.0 * math.log10(power)


def amplitude_for_snr(
    snr_target_db: float, steering: np.ndarray, covariance: np.ndarray, direction=(1.0, 1.0)
) -> np.ndarray:
    """Scale the amplitude direction so snr_db hits the requested value."""
    direction = np.asarray(direction, dtype=complex)
    wp = hermitian.solve_hpd(covariance, steering)
    gram = steering.conj().T @ wp
    unit_power = float(np.real(direction.conj() @ gram @ direction))
    if unit_power <= 0.0:
        raise ValueError("amplitude direction has zero whitened power")
    scale = math.sqrt(10.0 ** (snr_target_db / 10.0) / unit_power)
    return scale * direction
