"""Covariance estimation from secondary data.

Three estimators: the sample covariance matrix, the classical single-array
Tyler fixed point, and the dual-texture Tyler fixed point for the two-array
mixture-of-scaled-Gaussians model.  The dual fixed point alternates

    tau_hat(i, k) from the inverse blocks of the current estimate,
    M <- (1/K) sum_k T_k^-1 x_k x_k^H T_k^-1,

and is gauge-fixed each iteration so that each diagonal block has trace m
(the joint likelihood is invariant to per-array rescalings, so the gauge is
free; fixing it makes convergence measurable and reproducible).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import hermitian
from .clutter import SnapshotBatch
from .errors import DegenerateSnapshot, DimensionMismatch, EmptyBatch, NoConvergence

SCM = "scm"
TYL1 = "tyl1"
TWO_TYL = "2tyl"

#: textures this far below zero (relative) are a hard error, closer is clamped
_NEG_TOL = 1e-12


@dataclass
class CovarianceEstimate:
    """Estimated covariance plus fixed-point diagnostics."""

    matrix: np.ndarray
    method: str
    iterations: int = 0
    final_rel_dev: float = 0.0
    rel_dev_trace: np.ndarray | None = None


@dataclass
class TextureEstimates:
    """Per-snapshot texture estimates and their intermediates."""

    t1: np.ndarray
    t2: np.ndarray
    t12: np.ndarray
    tau1: np.ndarray
    tau2: np.ndarray


def scm(batch: SnapshotBatch) -> CovarianceEstimate:
    """Sample covariance matrix (1/K) sum x_k x_k^H."""
    x = batch.x
    mat = hermitian.symmetrize(np.einsum("kj,kl->jl", x, x.conj()) / batch.count)
    return CovarianceEstimate(mat, SCM)


def texture_step(x, inverse, *, neg_tol: float = _NEG_TOL) -> TextureEstimates:
    """Texture estimates for snapshots given the full inverse of M-hat.

    x may be a single length-2m snapshot or a (K, 2m) batch; `inverse` is
    W = M-hat^-1 whose m x m blocks drive the quadratic forms

        t1 = x1^H W11 x1 / m,   t2 = x2^H W22 x2 / m,
        t12 = Re(x1^H W12 x2) / m,

    combined into tau1 = t1 + sqrt(t1/t2) t12 and symmetrically for tau2.
    Both are nonnegative up to round-off by the Cauchy-Schwarz property of
    the HPD inverse; values below -neg_tol (relative) raise
    DegenerateSnapshot, closer ones are clamped to zero.
    """
    x = np.atleast_2d(np.asarray(x, dtype=complex))
    m = inverse.shape[0] // 2
    if x.shape[1] != 2 * m:
        raise DimensionMismatch(f"snapshot length {x.shape[1]}, inverse dim {2 * m}")
    w = hermitian.blocks(inverse)
    x1, x2 = x[:, :m], x[:, m:]
    t1 = np.real(np.einsum("ki,ij,kj->k", x1.conj(), w.b11, x1)) / m
    t2 = np.real(np.einsum("ki,ij,kj->k", x2.conj(), w.b22, x2)) / m
    t12 = np.real(np.einsum("ki,ij,kj->k", x1.conj(), w.b12, x2)) / m

    scale = np.trace(np.real(inverse)) / (2 * m)
    floor = 1e-30 * max(scale, np.finfo(float).tiny)
    if np.any(t1 <= floor) or np.any(t2 <= floor):
        raise DegenerateSnapshot("zero-energy snapshot in texture estimation")

    tau1 = t1 + np.sqrt(t1 / t2) * t12
    tau2 = t2 + np.sqrt(t2 / t1) * t12
    ref = np.maximum(t1, t2)
    if np.any(tau1 < -neg_tol * ref) or np.any(tau2 < -neg_tol * ref):
        raise DegenerateSnapshot("negative texture estimate beyond tolerance")
    return TextureEstimates(t1, t2, t12, np.maximum(tau1, 0.0), np.maximum(tau2, 0.0))


def _normalize_per_array(mat):
    """Rescale so each diagonal block has trace m; returns (matrix, (s1, s2))."""
    n = mat.shape[0]
    m = n // 2
    s1 = np.sqrt(np.real(np.trace(mat[:m, :m])) / m)
    s2 = np.sqrt(np.real(np.trace(mat[m:, m:])) / m)
    if not (s1 > 0 and s2 > 0):
        raise DegenerateSnapshot("estimate has a zero-trace diagonal block")
    out = np.array(mat, copy=True)
    out[:m, :m] /= s1 * s1
    out[:m, m:] /= s1 * s2
    out[m:, :m] /= s2 * s1
    out[m:, m:] /= s2 * s2
    return out, (s1, s2)


def two_tyler(
    batch: SnapshotBatch, max_iter: int = 100, tol: float = 1e-8
) -> CovarianceEstimate:
    """Dual-texture Tyler fixed point for the two-array MSG model.

    Requires K >= 2m.  Iterates from the identity, renormalizing each
    iterate to the per-array trace gauge, and stops when the relative
    Frobenius deviation between successive normalized iterates drops
    below tol.  Raises NoConvergence (carrying the last iterate) if
    max_iter is exhausted.
    """
    x = batch.x
    k, n = x.shape
    m = n // 2
    if k < n:
        raise EmptyBatch(f"dual Tyler needs K >= 2m, got K={k}, 2m={n}")

    est = np.eye(n, dtype=complex)
    history = []
    for it in range(1, max_iter + 1):
        inv = hermitian.hpd_inverse(est)
        tex = texture_step(x, inv)
        y = np.array(x, copy=True)
        y[:, :m] /= np.sqrt(tex.tau1)[:, None]
        y[:, m:] /= np.sqrt(tex.tau2)[:, None]
        raw = hermitian.symmetrize(np.einsum("kj,kl->jl", y, y.conj()) / k)
        new, _ = _normalize_per_array(raw)
        rel_dev = np.linalg.norm(new - est) / np.linalg.norm(est)
        history.append(rel_dev)
        est = new
        if rel_dev < tol:
            return CovarianceEstimate(est, TWO_TYL, it, rel_dev, np.asarray(history))
    raise NoConvergence(
        f"dual Tyler did not reach tol={tol} in {max_iter} iterations "
        f"(final rel dev {history[-1]:.3e})",
        estimate=CovarianceEstimate(est, TWO_TYL, max_iter, history[-1], np.asarray(history)),
        final_rel_dev=history[-1],
    )


def tyler_single(
    x, max_iter: int = 100, tol: float = 1e-8
) -> CovarianceEstimate:
    """Classical Tyler fixed point for a single array.

    x is a (K, m) batch with K >= m.  The fixed point of
    M = (m/K) sum x x^H / (x^H M^-1 x), trace-normalized to m.
    """
    x = np.atleast_2d(np.asarray(x, dtype=complex))
    k, m = x.shape
    if k < m:
        raise EmptyBatch(f"Tyler needs K >= m, got K={k}, m={m}")

    est = np.eye(m, dtype=complex)
    history = []
    for it in range(1, max_iter + 1):
        inv = hermitian.hpd_inverse(est)
        q = np.real(np.einsum("ki,ij,kj->k", x.conj(), inv, x))
        if np.any(q <= 1e-30 * m):
            raise DegenerateSnapshot("zero-energy snapshot in Tyler iteration")
        y = x / np.sqrt(q / m)[:, None]
        raw = hermitian.symmetrize(np.einsum("kj,kl->jl", y, y.conj()) / k)
        try:
            new = raw * (m / np.real(np.trace(raw)))
            hermitian.cholesky_factor(new)
        except Exception as exc:
            raise NoConvergence(
                f"Tyler iterate lost positive definiteness at iteration {it}",
                estimate=CovarianceEstimate(est, TYL1, it, np.nan),
                final_rel_dev=float("nan"),
            ) from exc
        rel_dev = np.linalg.norm(new - est) / np.linalg.norm(est)
        history.append(rel_dev)
        est = new
        if rel_dev < tol:
            return CovarianceEstimate(est, TYL1, it, rel_dev, np.asarray(history))
    raise NoConvergence(
        f"Tyler did not reach tol={tol} in {max_iter} iterations "
        f"(final rel dev {history[-1]:.3e})",
        estimate=CovarianceEstimate(est, TYL1, max_iter, history[-1], np.asarray(history)),
        final_rel_dev=history[-1],
    )
