"""Monte-Carlo experiment engine.

Threshold calibration, PFA-threshold curves, PD-vs-SNR curves, PD maps over
the (theta1, theta2) grid, estimator convergence traces, and the
secondary-data corruption experiment.

Reproducibility contract: every experiment splits its trials over a fixed
number of shards (independent of the worker count); each shard draws from
its own counter-based RNG stream keyed by (master seed, experiment tag,
shard index) and results are merged in shard order, so a given (config,
seed) pair produces byte-identical CSVs at any parallelism width.

Adaptive detectors re-estimate the covariance from a fresh secondary batch
on every trial; the engine batches trials together (stacked Cholesky /
solve / einsum) to keep that affordable.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property

import numpy as np

from . import detectors, estimators, hermitian, scene
from .clutter import (
    ClutterScene,
    SnapshotBatch,
    TextureModel,
    corrupt_batch,
    inject_target,
    make_secondary,
    sample_speckle,
    sample_texture,
    shard_rng,
)
from .errors import ConfigError, DegenerateSnapshot, NoConvergence
from .scene import (
    ArrayGeometry,
    CovarianceModelParams,
    amplitude_for_snr,
    steering_for_angles,
)

_CHUNK = 256  # trials processed together in the batched adaptive engine
_CHUNK_CLAIRVOYANT = 4096  # known-covariance trials are cheap; use bigger chunks


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ExperimentConfig:
    """Scene, detector and Monte-Carlo settings for one experiment."""

    m: int = 16
    k_secondary: int | None = None  # defaults to 2 * 2m
    beta: float = 3e-4
    rho1: float = 0.4
    rho2: float = 0.9
    zero_cross_blocks: bool = False
    texture: str = "gaussian"  # gaussian | gamma
    nu: float = 0.5
    pfa: float = 1e-2
    n_h0: int = 100_000
    n_mc: int = 2_000
    snr_grid_db: tuple = tuple(np.arange(-22.0, -2.0, 1.0))
    theta1_deg: float = 20.0
    theta2_deg: float = 30.0
    theta_grid_step_deg: float = 2.0
    theta_grid_span_deg: float = 60.0
    seed: int = 12345
    shards: int = 8
    workers: int = 1
    reuse_batch: bool = False

    def __post_init__(self):
        if not 0.0 < self.pfa < 1.0:
            raise ConfigError(f"pfa must lie in (0, 1), got {self.pfa}")
        if self.n_h0 * self.pfa < 10:
            raise ConfigError(
                f"n_h0={self.n_h0} cannot resolve pfa={self.pfa} (need n_h0 >= 10/pfa)"
            )
        if len(self.snr_grid_db) == 0:
            raise ConfigError("snr grid is empty")
        if self.shards < 1 or self.workers < 1:
            raise ConfigError("shards and workers must be >= 1")

    @property
    def k(self) -> int:
        return self.k_secondary if self.k_secondary is not None else 4 * self.m

    @cached_property
    def scene(self) -> ClutterScene:
        return ClutterScene(
            ArrayGeometry(self.m),
            CovarianceModelParams(self.beta, self.rho1, self.rho2, self.zero_cross_blocks),
            TextureModel(self.texture, self.nu),
        )

    @cached_property
    def steering(self) -> np.ndarray:
        return steering_for_angles(self.m, self.theta1_deg, self.theta2_deg)

    def theta_grid(self) -> np.ndarray:
        span, step = self.theta_grid_span_deg, self.theta_grid_step_deg
        return np.arange(-span, span + 0.5 * step, step)

    def fingerprint(self) -> str:
        payload = {k: v for k, v in asdict(self).items() if k != "workers"}
        payload["snr_grid_db"] = [float(v) for v in payload["snr_grid_db"]]
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class CurveResult:
    """Tabular Monte-Carlo output with provenance metadata."""

    experiment: str
    columns: tuple
    rows: np.ndarray
    fingerprint: str
    seed: int

    def to_csv(self, path):
        write_csv(path, self.columns, self.rows, self.fingerprint, self.seed)


def write_csv(path, columns, rows, fingerprint, seed):
    """CSV with '# config_fingerprint=' and '# seed=' comment lines."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# config_fingerprint={fingerprint}\n")
        fh.write(f"# seed={seed}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(format(v, ".12g") for v in row) + "\n")


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054):
    """Wilson 95% confidence interval for a binomial proportion."""
    if trials == 0:
        return 0.0, 1.0
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def _worker_count(cfg: ExperimentConfig) -> int:
    cap = os.environ.get("CROSSDETECT_THREADS")
    width = cfg.workers
    if cap:
        width = min(width, max(1, int(cap)))
    return max(1, width)


def _map_shards(cfg: ExperimentConfig, func, shard_sizes):
    """Run func(shard_index, n_trials) over shards, merged in shard order."""
    width = _worker_count(cfg)
    if width == 1:
        return [func(i, n) for i, n in enumerate(shard_sizes)]
    with ThreadPoolExecutor(max_workers=width) as pool:
        futures = [pool.submit(func, i, n) for i, n in enumerate(shard_sizes)]
        return [f.result() for f in futures]


def _shard_sizes(total: int, shards: int):
    base, extra = divmod(total, shards)
    return [base + (1 if i < extra else 0) for i in range(shards)]


# ---------------------------------------------------------------------------
# batched adaptive engine

_TWO_TYLER_MAX_ITER = 100
_TWO_TYLER_TOL = 1e-8


def _batched_normalize(mats):
    n = mats.shape[-1]
    m = n // 2
    tr1 = np.einsum("cii->c", mats[:, :m, :m]).real / m
    tr2 = np.einsum("cii->c", mats[:, m:, m:]).real / m
    s1 = np.sqrt(tr1)[:, None]
    s2 = np.sqrt(tr2)[:, None]
    out = np.array(mats, copy=True)
    out[:, :m, :m] /= (s1 * s1)[..., None]
    out[:, :m, m:] /= (s1 * s2)[..., None]
    out[:, m:, :m] /= (s2 * s1)[..., None]
    out[:, m:, m:] /= (s2 * s2)[..., None]
    return out


def _batched_outer_mean(x):
    """(1/K) sum_k x_k x_k^H for stacked batches (C, K, n), via matmul."""
    k = x.shape[1]
    mats = np.matmul(np.swapaxes(x, 1, 2), x.conj()) / k
    return 0.5 * (mats + np.conj(np.swapaxes(mats, 1, 2)))


def _batched_quad(x, w):
    """q[c, k] = x[c,k]^H w[c] x[c,k] for (C, K, m) snapshots, BLAS-backed."""
    tmp = np.matmul(x, np.swapaxes(w, 1, 2))
    return np.einsum("cki,cki->ck", x.conj(), tmp)


def batched_scm(x):
    """SCM for stacked batches; x has shape (C, K, n)."""
    return _batched_outer_mean(x)


def batched_two_tyler(x, max_iter=_TWO_TYLER_MAX_ITER, tol=_TWO_TYLER_TOL):
    """Dual-texture Tyler fixed point run on stacked batches (C, K, 2m).

    Each batch iterates until its own relative deviation drops below tol
    (then freezes), mirroring the sequential estimator.
    """
    c, k, n = x.shape
    m = n // 2
    x1, x2 = x[:, :, :m], x[:, :, m:]
    est = np.broadcast_to(np.eye(n, dtype=complex), (c, n, n)).copy()
    active = np.ones(c, dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        cur = est[idx]
        inv = np.linalg.inv(cur)
        w11, w22, w12 = inv[:, :m, :m], inv[:, m:, m:], inv[:, :m, m:]
        xi1, xi2 = x1[idx], x2[idx]
        t1 = _batched_quad(xi1, w11).real / m
        t2 = _batched_quad(xi2, w22).real / m
        t12 = np.einsum(
            "cki,cki->ck", xi1.conj(), np.matmul(xi2, np.swapaxes(w12, 1, 2))
        ).real / m
        if np.any(t1 <= 0) or np.any(t2 <= 0):
            raise DegenerateSnapshot("zero-energy snapshot in batched dual Tyler")
        tau1 = np.maximum(t1 + np.sqrt(t1 / t2) * t12, 0.0)
        tau2 = np.maximum(t2 + np.sqrt(t2 / t1) * t12, 0.0)
        if np.any(tau1 <= 0) or np.any(tau2 <= 0):
            raise DegenerateSnapshot("vanishing texture estimate in batched dual Tyler")
        y = np.concatenate(
            [xi1 / np.sqrt(tau1)[..., None], xi2 / np.sqrt(tau2)[..., None]], axis=2
        )
        new = _batched_normalize(_batched_outer_mean(y))
        rel = np.linalg.norm(new - cur, axis=(1, 2)) / np.linalg.norm(cur, axis=(1, 2))
        est[idx] = new
        active[idx] = rel >= tol
        if not active.any():
            return est
    raise NoConvergence(
        f"batched dual Tyler: {int(active.sum())} of {c} batches not converged "
        f"after {max_iter} iterations"
    )


def batched_tyler_single(x, max_iter=_TWO_TYLER_MAX_ITER, tol=_TWO_TYLER_TOL):
    """Classical Tyler fixed point on stacked batches (C, K, m)."""
    c, k, m = x.shape
    est = np.broadcast_to(np.eye(m, dtype=complex), (c, m, m)).copy()
    active = np.ones(c, dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        cur = est[idx]
        inv = np.linalg.inv(cur)
        xi = x[idx]
        q = _batched_quad(xi, inv).real
        if np.any(q <= 0):
            raise DegenerateSnapshot("zero-energy snapshot in batched Tyler")
        y = xi / np.sqrt(q / m)[..., None]
        raw = _batched_outer_mean(y)
        tr = np.einsum("cii->c", raw).real
        new = raw * (m / tr)[:, None, None]
        rel = np.linalg.norm(new - cur, axis=(1, 2)) / np.linalg.norm(cur, axis=(1, 2))
        est[idx] = new
        active[idx] = rel >= tol
        if not active.any():
            return est
    raise NoConvergence(
        f"batched Tyler: {int(active.sum())} of {c} batches not converged"
    )


def _batched_gram(steering, wp):
    gram = np.einsum("ij,cik->cjk", steering.conj(), wp)
    return 0.5 * (gram + np.conj(np.swapaxes(gram, 1, 2)))


def _batched_dual_sigmas(x, steering, covs):
    """Batched H0/H1 per-array scale estimates for per-trial covariances.

    x: (C, 2m) snapshots; covs: (C, 2m, 2m).  Returns a dict of arrays.
    """
    c, n = x.shape
    m = n // 2
    x1, x2 = x[:, :m], x[:, m:]
    xz1 = np.zeros_like(x)
    xz1[:, :m] = x1

    rhs = np.concatenate(
        [
            x[:, :, None],
            xz1[:, :, None],
            np.broadcast_to(steering, (c, n, 2)),
        ],
        axis=2,
    )
    sol = np.linalg.solve(covs, rhs)
    wx, y1, wp = sol[:, :, 0], sol[:, :, 1], sol[:, :, 2:]
    y2 = wx - y1
    gram = _batched_gram(steering, wp)
    gram_inv = np.linalg.inv(gram)

    a1 = np.einsum("ci,ci->c", x1.conj(), y1[:, :m]).real / m
    a2 = np.einsum("ci,ci->c", x2.conj(), y2[:, m:]).real / m
    a12 = np.einsum("ci,ci->c", x1.conj(), y2[:, :m]).real / m

    def g_apply(v):
        pv = np.einsum("ij,ci->cj", steering.conj(), v)
        coef = np.einsum("cjl,cl->cj", gram_inv, pv)
        return np.einsum("cij,cj->ci", wp, coef)

    r1 = y1 - g_apply(y1)
    r_full = wx - g_apply(wx)
    r2 = r_full - r1
    b1 = np.maximum(np.einsum("ci,ci->c", x1.conj(), r1[:, :m]).real / m, 0.0)
    b2 = np.maximum(np.einsum("ci,ci->c", x2.conj(), r2[:, m:]).real / m, 0.0)
    b12 = np.einsum("ci,ci->c", x1.conj(), r2[:, :m]).real / m

    with np.errstate(invalid="ignore", divide="ignore"):
        s10 = a1 + np.sqrt(a1 / a2) * a12
        s20 = a2 + np.sqrt(a2 / a1) * a12
        s11 = b1 + np.sqrt(b1 / b2) * b12
        s21 = b2 + np.sqrt(b2 / b1) * b12
    fit_floor = (a1 + a2) * 1e-13
    perfect = (b1 <= fit_floor) | (b2 <= fit_floor) | (b1 + b2 + 2 * b12 <= fit_floor)
    return {
        "wx": wx,
        "y1": y1,
        "wp": wp,
        "gram_inv": gram_inv,
        "s10": s10,
        "s20": s20,
        "s11": np.where(perfect, 0.0, s11),
        "s21": np.where(perfect, 0.0, s21),
        "perfect": perfect,
    }


def _batched_statistic(base: str, x, steering, covs):
    """Evaluate a detector statistic with a different covariance per trial."""
    c, n = x.shape
    m = n // 2
    if base in ("nmf1", "nmf2"):
        # covs here are the per-array m x m estimates
        xi = x[:, :m] if base == "nmf1" else x[:, m:]
        p = steering[:m, 0] if base == "nmf1" else steering[m:, 1]
        rhs = np.concatenate(
            [xi[:, :, None], np.broadcast_to(p[:, None], (c, m, 1))], axis=2
        )
        sol = np.linalg.solve(covs, rhs)
        wxi, wpi = sol[:, :, 0], sol[:, :, 1]
        num = np.abs(np.einsum("ci,ci->c", xi.conj(), wpi)) ** 2
        pp = np.einsum("i,ci->c", p.conj(), wpi).real
        xx = np.einsum("ci,ci->c", xi.conj(), wxi).real
        return num / (pp * xx)
    if base == "mimo-mf":
        rhs = np.concatenate(
            [x[:, :, None], np.broadcast_to(steering, (c, n, 2))], axis=2
        )
        sol = np.linalg.solve(covs, rhs)
        wx, wp = sol[:, :, 0], sol[:, :, 1:]
        gram_inv = np.linalg.inv(_batched_gram(steering, wp))
        pv = np.einsum("ij,ci->cj", steering.conj(), wx)
        return np.einsum("cj,cjl,cl->c", pv.conj(), gram_inv, pv).real

    sig = _batched_dual_sigmas(x, steering, covs)
    if base == "m-nmf-g":
        denom = sig["s11"] * sig["s21"]
        with np.errstate(divide="ignore", invalid="ignore"):
            stat = np.sqrt(sig["s10"] * sig["s20"] / denom)
        return np.where(sig["perfect"] | (denom <= 0.0), np.inf, stat)
    if base == "m-nmf-r":
        inv_s1 = 1.0 / np.sqrt(sig["s10"])
        inv_s2 = 1.0 / np.sqrt(sig["s20"])
        wu = inv_s1[:, None] * sig["y1"] + inv_s2[:, None] * (sig["wx"] - sig["y1"])
        pv = np.einsum("ij,ci->cj", steering.conj(), wu)
        return 2.0 * np.einsum("cj,cjl,cl->c", pv.conj(), sig["gram_inv"], pv).real
    raise ValueError(f"unsupported batched statistic {base!r}")


_ADAPTIVE_BASE = {
    "anmf1-scm": ("nmf1", "scm"),
    "anmf1-tyl": ("nmf1", "tyl"),
    "anmf2-scm": ("nmf2", "scm"),
    "anmf2-tyl": ("nmf2", "tyl"),
    "mimo-amf-scm": ("mimo-mf", "scm"),
    "m-anmf-g-scm": ("m-nmf-g", "scm"),
    "m-anmf-g-tyl": ("m-nmf-g", "tyl"),
    "m-anmf-r-scm": ("m-nmf-r", "scm"),
    "m-anmf-r-tyl": ("m-nmf-r", "tyl"),
}


def _validate_detector(detector: str):
    if detector not in detectors.DETECTOR_IDS:
        raise ConfigError(
            f"unknown detector {detector!r}; valid ids: {', '.join(detectors.DETECTOR_IDS)}"
        )


def _sample_snapshots(cfg: ExperimentConfig, rng, count: int) -> np.ndarray:
    sc = cfg.scene
    c = sample_speckle(sc.chol, rng, size=count)
    tau1, tau2 = sample_texture(sc.texture, rng, size=count)
    c[:, : cfg.m] *= np.sqrt(tau1)[:, None]
    c[:, cfg.m :] *= np.sqrt(tau2)[:, None]
    return c


def _adaptive_chunk_stats(cfg, detector, x_test, rng, steering):
    """Statistics for a chunk of adaptive trials with fresh secondary data."""
    base, est_kind = _ADAPTIVE_BASE[detector]
    c = x_test.shape[0]
    m = cfg.m
    sec = _sample_snapshots(cfg, rng, c * cfg.k).reshape(c, cfg.k, 2 * m)
    if base == "nmf1":
        sub = sec[:, :, :m]
        covs = batched_scm(sub) if est_kind == "scm" else batched_tyler_single(sub)
    elif base == "nmf2":
        sub = sec[:, :, m:]
        covs = batched_scm(sub) if est_kind == "scm" else batched_tyler_single(sub)
    else:
        covs = batched_scm(sec) if est_kind == "scm" else batched_two_tyler(sec)
    return _batched_statistic(base, x_test, steering, covs)


def _statistics(cfg, detector, total, tag, alpha=None, steering=None):
    """Monte-Carlo detection statistics, sharded and deterministic.

    alpha=None draws H0 trials; otherwise the target P alpha is injected.
    """
    _validate_detector(detector)
    steer = cfg.steering if steering is None else steering
    is_adaptive = detector in _ADAPTIVE_BASE

    def run_shard(shard, count):
        rng = shard_rng(cfg.seed, tag, shard)
        chunk = _CHUNK if is_adaptive else _CHUNK_CLAIRVOYANT
        out = np.empty(count)
        done = 0
        reused_covs = None
        while done < count:
            c = min(chunk, count - done)
            x = _sample_snapshots(cfg, rng, c)
            if alpha is not None:
                x = inject_target(x, steer, np.asarray(alpha, dtype=complex))
            if not is_adaptive:
                out[done : done + c] = np.atleast_1d(
                    detectors.clairvoyant(detector, x, steer, cfg.scene.covariance)
                )
            elif cfg.reuse_batch:
                if reused_covs is None:
                    base, est_kind = _ADAPTIVE_BASE[detector]
                    sec = _sample_snapshots(cfg, rng, cfg.k)[None]
                    if base == "nmf1":
                        sec = sec[:, :, : cfg.m]
                    elif base == "nmf2":
                        sec = sec[:, :, cfg.m :]
                    if est_kind == "scm":
                        reused_covs = batched_scm(sec)
                    elif base in ("nmf1", "nmf2"):
                        reused_covs = batched_tyler_single(sec)
                    else:
                        reused_covs = batched_two_tyler(sec)
                base, _ = _ADAPTIVE_BASE[detector]
                covs = np.broadcast_to(reused_covs[0], (c,) + reused_covs[0].shape)
                out[done : done + c] = _batched_statistic(base, x, steer, covs)
            else:
                out[done : done + c] = _adaptive_chunk_stats(cfg, detector, x, rng, steer)
            done += c
        return out

    parts = _map_shards(cfg, run_shard, _shard_sizes(total, cfg.shards))
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# experiments


def calibrate_threshold(cfg: ExperimentConfig, detector: str, n_h0=None, tag="calibrate"):
    """Empirical-quantile threshold at the configured PFA."""
    n = cfg.n_h0 if n_h0 is None else n_h0
    if n * cfg.pfa < 10:
        raise ConfigError(f"n_h0={n} cannot resolve pfa={cfg.pfa}")
    stats = np.sort(_statistics(cfg, detector, n, f"{tag}:{detector}"))
    rank = math.ceil(n * (1.0 - cfg.pfa))
    return float(stats[min(rank, n) - 1])


def pfa_curve(cfg: ExperimentConfig, detector: str, n_points=40) -> CurveResult:
    """Empirical (threshold, PFA) pairs on a log-PFA grid down to 10/N_h0."""
    stats = np.sort(_statistics(cfg, detector, cfg.n_h0, f"pfa:{detector}"))
    n = stats.size
    pfa_lo = 10.0 / n
    levels = np.logspace(0.0, math.log10(pfa_lo), n_points)
    rows = []
    for level in levels:
        rank = math.ceil(n * (1.0 - level))
        thr = stats[min(max(rank, 1), n) - 1]
        emp = np.count_nonzero(stats > thr) / n
        rows.append((thr, emp))
    rows = np.asarray(rows)
    rows = rows[np.argsort(rows[:, 0])]
    return CurveResult(
        f"pfa:{detector}", ("threshold", "pfa"), rows, cfg.fingerprint(), cfg.seed
    )


def empirical_pfa(cfg, detector, thresholds, n=None, tag="pfa-at"):
    """Fraction of fresh H0 statistics exceeding each threshold."""
    n = cfg.n_h0 if n is None else n
    stats = _statistics(cfg, detector, n, f"{tag}:{detector}")
    thresholds = np.atleast_1d(thresholds)
    return np.array([np.count_nonzero(stats > t) / n for t in thresholds])


def pd_point(cfg, detector, threshold, alpha, tag):
    """Detection probability at one operating point, with Wilson 95% CI."""
    stats = _statistics(cfg, detector, cfg.n_mc, tag, alpha=alpha)
    hits = int(np.count_nonzero(stats > threshold))
    lo, hi = wilson_interval(hits, cfg.n_mc)
    return hits / cfg.n_mc, lo, hi


def pd_curve(cfg: ExperimentConfig, detector: str, threshold=None) -> CurveResult:
    """PD versus SNR (dB) at the calibrated threshold."""
    if threshold is None:
        threshold = calibrate_threshold(cfg, detector)
    rows = []
    for i, snr in enumerate(sorted(cfg.snr_grid_db)):
        alpha = amplitude_for_snr(snr, cfg.steering, cfg.scene.covariance)
        pd, lo, hi = pd_point(cfg, detector, threshold, alpha, f"pd:{detector}:{i}")
        rows.append((snr, pd, lo, hi))
    return CurveResult(
        f"pd:{detector}",
        ("snr_db", "pd", "ci_lo", "ci_hi"),
        np.asarray(rows),
        cfg.fingerprint(),
        cfg.seed,
    )


def snr_at_pd(curve: CurveResult, pd_target: float = 0.8) -> float:
    """SNR (dB) where the curve crosses pd_target, by linear interpolation."""
    rows = curve.rows
    snr, pd = rows[:, 0], rows[:, 1]
    above = np.flatnonzero(pd >= pd_target)
    if above.size == 0:
        raise ValueError(f"curve never reaches PD={pd_target}")
    j = above[0]
    if j == 0:
        return float(snr[0])
    x0, x1 = snr[j - 1], snr[j]
    y0, y1 = pd[j - 1], pd[j]
    if y1 == y0:
        return float(x1)
    return float(x0 + (pd_target - y0) * (x1 - x0) / (y1 - y0))


def pd_theta_map(cfg: ExperimentConfig, detector: str, amplitude, threshold=None) -> CurveResult:
    """PD over the (theta1, theta2) grid at a fixed amplitude scale.

    The target and the steering are matched at each grid node; `amplitude`
    is the common complex amplitude on both arrays.
    """
    if threshold is None:
        threshold = calibrate_threshold(cfg, detector)
    grid = cfg.theta_grid()
    alpha = np.array([amplitude, amplitude], dtype=complex)
    rows = []
    for i, t1 in enumerate(grid):
        for j, t2 in enumerate(grid):
            node = replace(cfg, theta1_deg=float(t1), theta2_deg=float(t2))
            pd, _, _ = pd_point(node, detector, threshold, alpha, f"pdmap:{detector}:{i}:{j}")
            rows.append((t1, t2, pd))
    return CurveResult(
        f"pdmap:{detector}",
        ("theta1_deg", "theta2_deg", "pd"),
        np.asarray(rows),
        cfg.fingerprint(),
        cfg.seed,
    )


def convergence_trace(cfg: ExperimentConfig) -> CurveResult:
    """Per-iteration relative deviation of the dual-Tyler fixed point."""
    rng = shard_rng(cfg.seed, "converge", 0)
    batch = make_secondary(cfg.scene, cfg.k, rng)
    try:
        est = estimators.two_tyler(batch)
    except NoConvergence as exc:
        est = exc.estimate
    trace = est.rel_dev_trace
    rows = np.column_stack([np.arange(1, trace.size + 1), trace])
    return CurveResult(
        "converge", ("iter", "rel_dev"), rows, cfg.fingerprint(), cfg.seed
    )


# ---------------------------------------------------------------------------
# detection maps and the corruption experiment


def rao_map(x, cov, theta1_grid, theta2_grid):
    """Rao statistic over a (theta1, theta2) grid for one snapshot.

    The H0 scale estimates do not depend on the steering, so the map is a
    closed-form combination of per-axis projections; fully vectorized.
    """
    n = cov.shape[0]
    m = n // 2
    x = np.asarray(x, dtype=complex)
    inv = hermitian.hpd_inverse(cov)
    w11, w22, w12 = inv[:m, :m], inv[m:, m:], inv[:m, m:]
    x1, x2 = x[:m], x[m:]
    a1 = float(np.real(x1.conj() @ w11 @ x1)) / m
    a2 = float(np.real(x2.conj() @ w22 @ x2)) / m
    a12 = float(np.real(x1.conj() @ w12 @ x2)) / m
    s10 = a1 + math.sqrt(a1 / a2) * a12
    s20 = a2 + math.sqrt(a2 / a1) * a12
    u1, u2 = x1 / math.sqrt(s10), x2 / math.sqrt(s20)

    s1 = np.stack([scene.steering_vector(m, t) for t in theta1_grid])  # (G1, m)
    s2 = np.stack([scene.steering_vector(m, t) for t in theta2_grid])  # (G2, m)
    v1 = s1.conj() @ (w11 @ u1 + w12 @ u2)  # (G1,)
    v2 = s2.conj() @ (w12.conj().T @ u1 + w22 @ u2)  # (G2,)
    g11 = np.einsum("gi,ij,gj->g", s1.conj(), w11, s1).real  # (G1,)
    g22 = np.einsum("gi,ij,gj->g", s2.conj(), w22, s2).real  # (G2,)
    g12 = np.einsum("gi,ij,hj->gh", s1.conj(), w12, s2)  # (G1, G2)

    det = g11[:, None] * g22[None, :] - np.abs(g12) ** 2
    quad = (
        g22[None, :] * np.abs(v1[:, None]) ** 2
        + g11[:, None] * np.abs(v2[None, :]) ** 2
        - 2.0 * np.real(v1.conj()[:, None] * g12 * v2[None, :])
    )
    return 2.0 * quad / det


@dataclass
class CorruptionRun:
    """Paired clean/corrupted detection maps for both estimators."""

    theta1_grid: np.ndarray
    theta2_grid: np.ndarray
    maps: dict  # (estimator, "clean"|"corrupt") -> 2-D statistic map
    truth_index: tuple


def _peak_to_background(stat_map):
    peak = float(np.max(stat_map))
    background = float(np.median(stat_map))
    return peak / max(background, np.finfo(float).tiny)


def corruption_experiment(
    cfg: ExperimentConfig,
    target_snr_db: float = 25.0,
    corrupt_snr_db: float = 35.0,
    corrupt_index: int = 0,
    seed_offset: int = 0,
) -> CorruptionRun:
    """One seeded run of the secondary-data corruption experiment.

    A target sits at the configured (theta1, theta2); the secondary window
    is corrupted by a strong synthetic target at the same angles.  The Rao
    detector map over the theta grid is computed with the SCM and with the
    dual-Tyler estimate, from the clean and the corrupted window.
    """
    if not 0 <= corrupt_index < cfg.k:
        raise IndexError(f"corrupt index {corrupt_index} outside window of {cfg.k}")
    rng = shard_rng(cfg.seed, "corrupt", seed_offset)
    sc = cfg.scene
    steer = cfg.steering
    alpha_t = amplitude_for_snr(target_snr_db, steer, sc.covariance)
    alpha_c = amplitude_for_snr(corrupt_snr_db, steer, sc.covariance)

    clean = make_secondary(sc, cfg.k, rng)
    corrupted = corrupt_batch(clean, steer, alpha_c, corrupt_index)
    x = _sample_snapshots(cfg, rng, 1)[0]
    x = inject_target(x, steer, alpha_t)

    grid = cfg.theta_grid()
    maps = {}
    for batch, label in ((clean, "clean"), (corrupted, "corrupt")):
        maps[("scm", label)] = rao_map(x, estimators.scm(batch).matrix, grid, grid)
        try:
            robust = estimators.two_tyler(batch)
        except NoConvergence as exc:
            # corrupted windows can stall just short of tolerance; the last
            # iterate is still the estimate whose robustness is under test
            robust = exc.estimate
        maps[("tyl", label)] = rao_map(x, robust.matrix, grid, grid)

    i1 = int(np.argmin(np.abs(grid - cfg.theta1_deg)))
    i2 = int(np.argmin(np.abs(grid - cfg.theta2_deg)))
    return CorruptionRun(grid, grid, maps, (i1, i2))


def corruption_summary(run: CorruptionRun) -> dict:
    """Argmax hits and peak-to-background degradation for one run."""
    out = {}
    for est in ("scm", "tyl"):
        corrupt = run.maps[(est, "corrupt")]
        clean = run.maps[(est, "clean")]
        argmax = np.unravel_index(np.argmax(corrupt), corrupt.shape)
        pbr_clean = _peak_to_background(clean)
        pbr_corrupt = _peak_to_background(corrupt)
        out[est] = {
            "argmax_at_truth": tuple(argmax) == run.truth_index,
            "pbr_degradation": 1.0 - pbr_corrupt / pbr_clean,
        }
    return out
