"""Complex Hermitian linear algebra primitives.

All covariance matrices handled by the library are Hermitian positive
definite, so Cholesky is the only factorization used; a failed
factorization is a meaningful signal (degenerate covariance), not a
numerical fallback case.

Block-inverse convention: for a 2m x 2m covariance M partitioned into
m x m blocks, every "inverse block" in this library denotes a block of
the FULL inverse W = M^-1, never the inverse of a block of M.  All
texture and scale estimates downstream are defined in terms of these
full-inverse blocks.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import DimensionMismatch, NotPositiveDefinite


class Blocks(NamedTuple):
    """The four m x m blocks of a 2m x 2m matrix."""

    b11: np.ndarray
    b12: np.ndarray
    b21: np.ndarray
    b22: np.ndarray


def symmetrize(a):
    """Return (A + A^H)/2, absorbing Hermitian round-off."""
    a = np.asarray(a)
    return 0.5 * (a + a.conj().T)


def cholesky_factor(a):
    """Lower Cholesky factor of a Hermitian positive definite matrix.

    Raises NotPositiveDefinite when a pivot falls at or below
    dim * eps * max(diag(A)).
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    try:
        low = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    floor = n * np.finfo(a.real.dtype if a.dtype.kind == "c" else a.dtype).eps
    floor = floor * float(np.max(np.abs(np.real(np.diag(a)))))
    pivots = np.real(np.diag(low)) ** 2
    if np.any(pivots <= floor):
        raise NotPositiveDefinite(
            f"pivot {pivots.min():.3e} at or below floor {floor:.3e}"
        )
    return low


def solve_cholesky(low, b):
    """Solve A y = b given the lower Cholesky factor of A."""
    y = solve_triangular(low, b, lower=True)
    return solve_triangular(low.conj().T, y, lower=False)


def solve_hpd(a, b):
    """Solve A y = b for Hermitian positive definite A."""
    a = np.asarray(a)
    b = np.asarray(b)
    if b.shape[0] != a.shape[0]:
        raise DimensionMismatch(
            f"matrix dim {a.shape[0]} vs right-hand side length {b.shape[0]}"
        )
    return solve_cholesky(cholesky_factor(a), b)


def hpd_inverse(a):
    """Full inverse of a Hermitian positive definite matrix via Cholesky."""
    low = cholesky_factor(a)
    eye = np.eye(a.shape[0], dtype=complex)
    return symmetrize(cho_solve((low, True), eye))


def blocks(a) -> Blocks:
    """Split an even-dimensioned square matrix into its four m x m blocks."""
    a = np.asarray(a)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n or n % 2:
        raise DimensionMismatch(f"expected square even-dimensioned matrix, got {a.shape}")
    m = n // 2
    return Blocks(a[:m, :m], a[:m, m:], a[m:, :m], a[m:, m:])


def inverse_blocks(a) -> Blocks:
    """Blocks of the full inverse of a 2m x 2m HPD matrix.

    Returns W11, W12, W21, W22 with W = A^-1 and W21 = W12^H.
    """
    return blocks(hpd_inverse(a))


def quad_form(w, x, y):
    """Sesquilinear form x^H W y.

    Supports batched x, y with shape (..., n); the form is taken over the
    last axis.
    """
    w = np.asarray(w)
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape[-1] != w.shape[0] or y.shape[-1] != w.shape[1]:
        raise DimensionMismatch(
            f"form of shape {w.shape} applied to vectors of length "
            f"{x.shape[-1]} and {y.shape[-1]}"
        )
    return np.einsum("...i,ij,...j->...", x.conj(), w, y)


def quad_form_real(w, x):
    """x^H W x for Hermitian W, returned as a real scalar/array."""
    return np.real(quad_form(w, x, x))


def assemble(b11, b12, b21, b22):
    """Assemble four m x m blocks into a 2m x 2m matrix."""
    return np.block([[b11, b12], [b21, b22]])
