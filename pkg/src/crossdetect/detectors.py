"""Detection statistics for single-array and dual-array processing.

Clairvoyant statistics (known covariance):

* ``nmf``          -- single-array normalized matched filter, in [0, 1].
* ``mimo_mf``      -- dual-array matched filter for homogeneous Gaussian
                      noise; intentionally NOT scale invariant.
* ``m_nmf_g``      -- dual-array GLRT under per-array unknown scale/texture,
                      the ratio of H0 to H1 scale-product ML estimates (>= 1).
* ``m_nmf_r``      -- dual-array Rao test under the same model.
* ``m_nmf_i``      -- independent-arrays product detector (diagonal blocks
                      only), reported on the same root scale as m_nmf_g.
* ``ace_subspace`` -- subspace ACE projection ratio, in [0, 1].

Adaptive versions plug a covariance estimate from secondary data into the
same statistics; see ``adaptive``.

All statistics accept a single snapshot of length 2m (or m for ``nmf``) or
a batch with shape (N, .); batches come back as arrays.  Quadratic forms
route through Cholesky solves; dense inverses appear only in test oracles.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from . import estimators, hermitian
from .clutter import SnapshotBatch
from .errors import (
    DimensionMismatch,
    IncompatiblePair,
    NoiseFloorZero,
    SingularGram,
)

CLAIRVOYANT_IDS = ("nmf1", "nmf2", "mimo-mf", "m-nmf-g", "m-nmf-r", "m-nmf-i", "ace")
ADAPTIVE_IDS = (
    "anmf1-scm",
    "anmf1-tyl",
    "anmf2-scm",
    "anmf2-tyl",
    "mimo-amf-scm",
    "m-anmf-g-scm",
    "m-anmf-g-tyl",
    "m-anmf-r-scm",
    "m-anmf-r-tyl",
)
DETECTOR_IDS = CLAIRVOYANT_IDS + ADAPTIVE_IDS


@dataclass
class SigmaEstimates:
    """ML per-array scale estimates under H0 and H1 with intermediates."""

    a1: np.ndarray
    a2: np.ndarray
    a12: np.ndarray
    a1_h1: np.ndarray
    a2_h1: np.ndarray
    a12_h1: np.ndarray
    sigma0_sq_1: np.ndarray
    sigma0_sq_2: np.ndarray
    sigma1_sq_1: np.ndarray
    sigma1_sq_2: np.ndarray
    perfect_fit: np.ndarray  # bool; H1 residual energy vanished


@dataclass
class DetectorOutput:
    """Result of one adaptive detector evaluation."""

    detector: str
    estimator: str | None
    statistic: float | np.ndarray
    wall_time: float
    sigmas: SigmaEstimates | None = None
    estimate: estimators.CovarianceEstimate | None = None


def _as_batch(x, length):
    x = np.asarray(x, dtype=complex)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != length:
        raise DimensionMismatch(f"snapshot length {x.shape[1]}, expected {length}")
    return x, single


def _unbatch(value, single):
    return float(value[0]) if single else value


def _noise_floor(covariance, x_sq):
    trace_scale = np.real(np.trace(covariance)) / covariance.shape[0]
    return 1e-30 * max(trace_scale, np.finfo(float).tiny) * np.maximum(x_sq, 1.0)


def nmf(x, p, cov):
    """Normalized matched filter |p^H M^-1 x|^2 / ((p^H M^-1 p)(x^H M^-1 x))."""
    x, single = _as_batch(x, cov.shape[0])
    low = hermitian.cholesky_factor(cov)
    wp = cho_solve((low, True), p)
    wx = cho_solve((low, True), x.T).T
    num = np.abs(x.conj() @ wp) ** 2
    pp = float(np.real(p.conj() @ wp))
    xx = np.real(np.einsum("ki,ki->k", x.conj(), wx))
    if np.any(xx <= _noise_floor(cov, np.einsum("ki,ki->k", x.conj(), x).real)):
        raise NoiseFloorZero("snapshot energy below floor in NMF")
    return _unbatch(num / (pp * xx), single)


def mimo_mf(x, steering, cov):
    """Matched-filter statistic x^H C^-1 P (P^H C^-1 P)^-1 P^H C^-1 x."""
    x, single = _as_batch(x, cov.shape[0])
    low = hermitian.cholesky_factor(cov)
    wp = cho_solve((low, True), steering)
    gram = steering.conj().T @ wp
    gram = 0.5 * (gram + gram.conj().T)
    try:
        gram_inv = np.linalg.inv(gram)
    except np.linalg.LinAlgError as exc:
        raise SingularGram("P^H C^-1 P is singular") from exc
    v = x.conj() @ wp  # (N, 2)
    stat = np.real(np.einsum("ki,ij,kj->k", v, gram_inv, v.conj()))
    return _unbatch(stat, single)


def _sigma_pair(a1, a2, a12):
    """Solve the coupled scale system: sigma_i^2 = a_i + sqrt(a_i/a_j) a12."""
    with np.errstate(invalid="ignore", divide="ignore"):
        s1 = a1 + np.sqrt(a1 / a2) * a12
        s2 = a2 + np.sqrt(a2 / a1) * a12
    return s1, s2


def glrt_sigmas(x, steering, cov) -> SigmaEstimates:
    """Per-array scale ML estimates under H0 and H1.

    H0 uses the blocks of W = M^-1; H1 replaces W by W - G with
    G = M^-1 P (P^H M^-1 P)^-1 P^H M^-1, i.e. the projection onto the
    whitened steering subspace removed.  The cross forms x1^H W12 x2 are
    obtained by solving against the array-1-padded snapshot and using
    linearity, so only Cholesky solves are involved.
    """
    n = cov.shape[0]
    m = n // 2
    x, single = _as_batch(x, n)
    x1, x2 = x[:, :m], x[:, m:]

    low = hermitian.cholesky_factor(cov)
    xz1 = np.zeros_like(x)
    xz1[:, :m] = x1  # snapshot restricted to array 1
    wx = cho_solve((low, True), x.T).T  # (N, 2m) = M^-1 x
    y1 = cho_solve((low, True), xz1.T).T  # M^-1 [x1; 0]
    y2 = wx - y1  # M^-1 [0; x2]
    wp = cho_solve((low, True), steering)  # (2m, 2) = M^-1 P
    gram = steering.conj().T @ wp
    gram = 0.5 * (gram + gram.conj().T)
    try:
        gram_inv = np.linalg.inv(gram)
    except np.linalg.LinAlgError as exc:
        raise SingularGram("P^H M^-1 P is singular") from exc

    a1 = np.real(np.einsum("ki,ki->k", x1.conj(), y1[:, :m])) / m
    a2 = np.real(np.einsum("ki,ki->k", x2.conj(), y2[:, m:])) / m
    a12 = np.real(np.einsum("ki,ki->k", x1.conj(), y2[:, :m])) / m

    floor1 = _noise_floor(cov, np.einsum("ki,ki->k", x1.conj(), x1).real) / m
    floor2 = _noise_floor(cov, np.einsum("ki,ki->k", x2.conj(), x2).real) / m
    if np.any(a1 <= floor1) or np.any(a2 <= floor2):
        raise NoiseFloorZero("snapshot energy below floor in GLRT scales")

    # H1 forms use R = W - G with G v = M^-1 P gram^-1 P^H M^-1 v; by
    # linearity R applied to the padded snapshots gives all three forms.
    def _g_apply(y):
        coef = (y @ steering.conj()) @ gram_inv.T  # (N, 2) = gram^-1 P^H M^-1 v
        return coef @ wp.T

    r1 = y1 - _g_apply(y1)  # R [x1; 0]
    r_full = wx - _g_apply(wx)
    r2 = r_full - r1  # R [0; x2]
    b1 = np.real(np.einsum("ki,ki->k", x1.conj(), r1[:, :m])) / m
    b2 = np.real(np.einsum("ki,ki->k", x2.conj(), r2[:, m:])) / m
    b12 = np.real(np.einsum("ki,ki->k", x1.conj(), r2[:, :m])) / m
    b1 = np.maximum(b1, 0.0)  # PSD forms; absorb round-off
    b2 = np.maximum(b2, 0.0)

    # vanished residual energy flags a perfect H1 fit (+inf statistic)
    resid = b1 + b2 + 2.0 * b12
    fit_floor = (a1 + a2) * 1e-13
    perfect = (b1 <= fit_floor) | (b2 <= fit_floor) | (resid <= fit_floor)

    s10, s20 = _sigma_pair(a1, a2, a12)
    with np.errstate(invalid="ignore", divide="ignore"):
        s11, s21 = _sigma_pair(b1, b2, b12)
    s11 = np.where(perfect, 0.0, s11)
    s21 = np.where(perfect, 0.0, s21)

    out = SigmaEstimates(a1, a2, a12, b1, b2, b12, s10, s20, s11, s21, perfect)
    if single:
        for name in (
            "a1", "a2", "a12", "a1_h1", "a2_h1", "a12_h1",
            "sigma0_sq_1", "sigma0_sq_2", "sigma1_sq_1", "sigma1_sq_2", "perfect_fit",
        ):
            setattr(out, name, getattr(out, name)[0])
    return out


def m_nmf_g(x, steering, cov):
    """Dual-array GLRT: ratio of H0 to H1 sigma products, >= 1.

    Returned on the 2m-th-root scale of the full likelihood ratio; a
    perfect H1 fit maps to +inf (the correct decision for a noise-free
    target).
    """
    xb, single = _as_batch(x, cov.shape[0])
    sig = glrt_sigmas(xb, steering, cov)
    denom = sig.sigma1_sq_1 * sig.sigma1_sq_2
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = np.sqrt((sig.sigma0_sq_1 * sig.sigma0_sq_2) / denom)
    stat = np.where(sig.perfect_fit | (denom <= 0.0), np.inf, stat)
    return _unbatch(stat, single)


def m_nmf_r(x, steering, cov):
    """Dual-array Rao statistic 2 x^H C0^-1 P (P^H C0^-1 P)^-1 P^H C0^-1 x.

    C0 = Sigma0 M Sigma0 with Sigma0 the H0 scale estimates.  Because the
    steering matrix is block diagonal, Sigma0^-1 P = P Z^-1 with a 2 x 2
    diagonal Z, and the statistic reduces to the M-whitened projection of
    the per-array normalized snapshot; that reduction is what is computed
    here (verified against the literal dense construction in the tests).
    """
    n = cov.shape[0]
    m = n // 2
    xb, single = _as_batch(x, n)
    sig = glrt_sigmas(xb, steering, cov)
    u = np.array(xb, copy=True)
    u[:, :m] /= np.sqrt(sig.sigma0_sq_1)[:, None]
    u[:, m:] /= np.sqrt(sig.sigma0_sq_2)[:, None]

    low = hermitian.cholesky_factor(cov)
    wp = cho_solve((low, True), steering)
    gram = steering.conj().T @ wp
    gram = 0.5 * (gram + gram.conj().T)
    try:
        gram_inv = np.linalg.inv(gram)
    except np.linalg.LinAlgError as exc:
        raise SingularGram("P^H M^-1 P is singular") from exc
    v = u.conj() @ wp  # (N, 2) = (P^H M^-1 u)^*
    stat = 2.0 * np.real(np.einsum("ki,ij,kj->k", v, gram_inv, v.conj()))
    return _unbatch(stat, single)


def m_nmf_i(x, steering, cov):
    """Independent-arrays product detector from the diagonal blocks only.

    prod_i (1 - NMF_i)^(-1/2), the 2m-th root of the product-form
    statistic, matching the scale of ``m_nmf_g`` (and equal to it when the
    cross blocks of M vanish).
    """
    n = cov.shape[0]
    m = n // 2
    xb, single = _as_batch(x, n)
    mb = hermitian.blocks(cov)
    p1 = steering[:m, 0]
    p2 = steering[m:, 1]
    f1 = np.atleast_1d(nmf(xb[:, :m], p1, np.ascontiguousarray(mb.b11)))
    f2 = np.atleast_1d(nmf(xb[:, m:], p2, np.ascontiguousarray(mb.b22)))
    with np.errstate(divide="ignore"):
        stat = 1.0 / np.sqrt((1.0 - f1) * (1.0 - f2))
    stat = np.where((f1 >= 1.0) | (f2 >= 1.0), np.inf, stat)
    return _unbatch(stat, single)


def ace_subspace(x, steering, cov):
    """Subspace ACE: whitened projection ratio onto range(P), in [0, 1]."""
    xb, single = _as_batch(x, cov.shape[0])
    low = hermitian.cholesky_factor(cov)
    wx = cho_solve((low, True), xb.T).T
    wp = cho_solve((low, True), steering)
    gram = steering.conj().T @ wp
    gram = 0.5 * (gram + gram.conj().T)
    try:
        gram_inv = np.linalg.inv(gram)
    except np.linalg.LinAlgError as exc:
        raise SingularGram("P^H M^-1 P is singular") from exc
    v = xb.conj() @ wp
    num = np.real(np.einsum("ki,ij,kj->k", v, gram_inv, v.conj()))
    den = np.real(np.einsum("ki,ki->k", xb.conj(), wx))
    if np.any(den <= _noise_floor(cov, np.einsum("ki,ki->k", xb.conj(), xb).real)):
        raise NoiseFloorZero("snapshot energy below floor in ACE")
    return _unbatch(num / den, single)


def alpha_mle(x, steering, cov):
    """Debug accessor: ML amplitude estimate (P^H C^-1 P)^-1 P^H C^-1 x."""
    low = hermitian.cholesky_factor(cov)
    wp = cho_solve((low, True), steering)
    gram = steering.conj().T @ wp
    return np.linalg.solve(gram, wp.conj().T @ np.asarray(x, dtype=complex))


def clairvoyant(detector: str, x, steering, cov):
    """Evaluate a known-covariance detector by id."""
    n = cov.shape[0]
    m = n // 2
    if detector == "nmf1":
        xb, single = _as_batch(x, n)
        mb = hermitian.blocks(cov)
        return _unbatch(
            np.atleast_1d(nmf(xb[:, :m], steering[:m, 0], np.ascontiguousarray(mb.b11))),
            single,
        )
    if detector == "nmf2":
        xb, single = _as_batch(x, n)
        mb = hermitian.blocks(cov)
        return _unbatch(
            np.atleast_1d(nmf(xb[:, m:], steering[m:, 1], np.ascontiguousarray(mb.b22))),
            single,
        )
    if detector == "mimo-mf":
        return mimo_mf(x, steering, cov)
    if detector == "m-nmf-g":
        return m_nmf_g(x, steering, cov)
    if detector == "m-nmf-r":
        return m_nmf_r(x, steering, cov)
    if detector == "m-nmf-i":
        return m_nmf_i(x, steering, cov)
    if detector == "ace":
        return ace_subspace(x, steering, cov)
    raise ValueError(f"unknown clairvoyant detector {detector!r}; valid: {CLAIRVOYANT_IDS}")


def _estimate_for(detector: str, estimator: str, batch: SnapshotBatch):
    """Estimate the covariance a detector needs from the secondary batch."""
    m = batch.m
    single_array = detector.startswith("anmf1") or detector.startswith("anmf2")
    if single_array:
        sub = batch.x[:, :m] if detector.startswith("anmf1") else batch.x[:, m:]
        if estimator == "scm":
            return estimators.scm(SnapshotBatch(sub))
        return estimators.tyler_single(sub)
    if estimator == "scm":
        return estimators.scm(batch)
    return estimators.two_tyler(batch)


def adaptive(detector: str, x, steering, batch: SnapshotBatch, estimator: str | None = None) -> DetectorOutput:
    """Two-step adaptive detection: estimate the covariance, then test.

    ``detector`` is an adaptive id like 'm-anmf-r-tyl'; ``estimator`` may
    be given separately ('scm' | 'tyl') with a bare id like 'm-anmf-r'.
    MIMO-AMF only makes sense with the SCM (the Tyler-style estimate is
    defined up to scale, which the AMF statistic is sensitive to);
    requesting it with 'tyl' raises IncompatiblePair.
    """
    if estimator is None:
        for suffix in ("-scm", "-tyl"):
            if detector.endswith(suffix):
                estimator = suffix[1:]
                detector = detector[: -len(suffix)]
                break
    if estimator not in ("scm", "tyl"):
        raise ValueError(f"unknown estimator {estimator!r} (use 'scm' or 'tyl')")
    if detector == "mimo-amf":
        if estimator == "tyl":
            raise IncompatiblePair("MIMO-AMF is scale-sensitive; Tyler-style estimates are scale-free")
    base = {
        "anmf1": "nmf1",
        "anmf2": "nmf2",
        "mimo-amf": "mimo-mf",
        "m-anmf-g": "m-nmf-g",
        "m-anmf-r": "m-nmf-r",
    }.get(detector)
    if base is None:
        raise ValueError(f"unknown adaptive detector {detector!r}; valid: {ADAPTIVE_IDS}")

    start = time.perf_counter()
    est = _estimate_for(detector, estimator, batch)
    n = batch.x.shape[1]
    m = n // 2
    if detector == "anmf1":
        stat = nmf(np.asarray(x, dtype=complex)[..., :m], steering[:m, 0], est.matrix)
    elif detector == "anmf2":
        stat = nmf(np.asarray(x, dtype=complex)[..., m:], steering[m:, 1], est.matrix)
    else:
        stat = clairvoyant(base, x, steering, est.matrix)
    elapsed = time.perf_counter() - start
    return DetectorOutput(f"{detector}-{estimator}", estimator, stat, elapsed, estimate=est)
