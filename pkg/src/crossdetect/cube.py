"""Synthetic ping-cube files and sliding-window detection over range bins.

A ping cube stores one snapshot per range bin for the dual-array receiver
in a small binary format:

    magic   4 bytes ASCII "PCUB"
    version u16 little-endian, currently 1
    m       u16  sensors per array
    arrays  u16  number of arrays, always 2
    bins    u32  number of range bins
    payload bins x 2m complex samples as little-endian float32 (re, im)
            pairs, range-major, array-1 sensors first then array-2

Storage is float32; all computation is float64.  Round-trips are bit-exact
on any platform (endianness is pinned).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import detectors, estimators, harness
from .clutter import ClutterScene, SnapshotBatch, make_secondary, shard_rng
from .errors import ConfigError, CrossDetectError, DimensionMismatch, WindowTooSmall
from .scene import steering_for_angles

MAGIC = b"PCUB"
VERSION = 1
N_ARRAYS = 2
_HEADER = struct.Struct("<4sHHHI")

SHRINK = "shrink"
SKIP = "skip"


@dataclass
class PingCube:
    """In-memory cube: one length-2m snapshot per range bin."""

    samples: np.ndarray  # (n_range_bins, 2m) complex

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=complex))
        if self.samples.shape[1] % 2:
            raise DimensionMismatch(
                f"snapshot length {self.samples.shape[1]} is odd"
            )

    @property
    def m(self) -> int:
        return self.samples.shape[1] // 2

    @property
    def n_range_bins(self) -> int:
        return self.samples.shape[0]


def write_cube(path, cube: PingCube) -> None:
    """Serialize a cube; float32 (re, im) pairs, little-endian."""
    flat = np.empty((cube.n_range_bins, 2 * cube.m, 2), dtype="<f4")
    flat[:, :, 0] = cube.samples.real.astype(np.float32)
    flat[:, :, 1] = cube.samples.imag.astype(np.float32)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, cube.m, N_ARRAYS, cube.n_range_bins))
        fh.write(flat.tobytes())


def read_cube(path) -> PingCube:
    """Read and validate a cube file."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise ConfigError(f"{path}: truncated header")
        magic, version, m, n_arrays, n_bins = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ConfigError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise ConfigError(f"{path}: unsupported version {version}")
        if n_arrays != N_ARRAYS:
            raise ConfigError(f"{path}: expected {N_ARRAYS} arrays, got {n_arrays}")
        payload = fh.read()
    expected = n_bins * 2 * m * 8
    if len(payload) != expected:
        raise ConfigError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    flat = np.frombuffer(payload, dtype="<f4").reshape(n_bins, 2 * m, 2)
    samples = flat[:, :, 0].astype(float) + 1j * flat[:, :, 1].astype(float)
    return PingCube(samples)


@dataclass(frozen=True)
class CubeTarget:
    """A point target injected at one range bin with a common amplitude."""

    range_bin: int
    theta1_deg: float
    theta2_deg: float
    amplitude: complex


def synth_cube(scene: ClutterScene, n_range_bins: int, targets, seed: int) -> PingCube:
    """MSG clutter per range bin with the listed targets injected."""
    if n_range_bins < 1:
        raise ConfigError(f"need at least one range bin, got {n_range_bins}")
    rng = shard_rng(seed, "synth-cube", 0)
    samples = make_secondary(scene, n_range_bins, rng).x
    for tgt in targets:
        if not 0 <= tgt.range_bin < n_range_bins:
            raise ConfigError(
                f"target bin {tgt.range_bin} outside cube of {n_range_bins} bins"
            )
        steer = steering_for_angles(scene.m, tgt.theta1_deg, tgt.theta2_deg)
        alpha = np.array([tgt.amplitude, tgt.amplitude], dtype=complex)
        samples[tgt.range_bin] += steer @ alpha
    return PingCube(samples)


@dataclass(frozen=True)
class WindowPolicy:
    """Sliding secondary window around the cell under test."""

    k: int
    g: int = 8
    edge: str = SHRINK

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"window size must be positive, got {self.k}")
        if self.g < 0:
            raise ConfigError(f"guard count must be nonnegative, got {self.g}")
        if self.edge not in (SHRINK, SKIP):
            raise ConfigError(f"edge policy must be 'shrink' or 'skip', got {self.edge!r}")


def secondary_indices(n_bins: int, cut: int, policy: WindowPolicy):
    """Nearest range bins to the CUT, excluding it and its guard band.

    Returns an index array sorted by distance then index, or None when the
    window cannot be filled under the 'skip' edge policy.
    """
    lo, hi = cut - policy.g, cut + policy.g
    candidates = [i for i in range(n_bins) if i < lo or i > hi]
    if len(candidates) < policy.k:
        if policy.edge == SKIP:
            return None
        if not candidates:
            raise WindowTooSmall(
                f"no secondary bins available for bin {cut} "
                f"(guards {policy.g}, cube of {n_bins})"
            )
        return np.asarray(candidates)
    candidates.sort(key=lambda i: (abs(i - cut), i))
    return np.asarray(sorted(candidates[: policy.k]))


_ESTIMATOR_IDS = ("scm", "tyl")
_MAP_BASES = ("nmf1", "nmf2", "mimo-mf", "m-nmf-g", "m-nmf-r")


def _estimate_window(base, est_kind, sub: np.ndarray, m: int):
    """Covariance estimate for one window, per-array for single-array tests."""
    if base == "nmf1":
        data = sub[:, :m]
    elif base == "nmf2":
        data = sub[:, m:]
    else:
        data = sub
    if est_kind == "scm":
        return estimators.scm(SnapshotBatch(data)).matrix
    if base in ("nmf1", "nmf2"):
        return estimators.tyler_single(data).matrix
    return estimators.two_tyler(SnapshotBatch(data)).matrix


def detect_cube(
    cube: PingCube,
    detector: str,
    estimator: str,
    window: WindowPolicy,
    theta1_grid,
    theta2_grid,
    bins=None,
) -> harness.CurveResult:
    """Sliding-window detection maps over selected range bins.

    For each selected bin the secondary batch is the window.k nearest bins
    outside the guard band; the covariance is estimated from it and the
    statistic evaluated at every (theta1, theta2) node.  Bins whose
    estimation fails keep their rows (statistic NaN) with error=1.
    """
    if detector not in _MAP_BASES:
        raise ConfigError(
            f"unknown detector {detector!r} for cube maps; "
            f"valid: {', '.join(_MAP_BASES)}"
        )
    if estimator not in _ESTIMATOR_IDS:
        raise ConfigError(
            f"unknown estimator {estimator!r}; valid: {', '.join(_ESTIMATOR_IDS)}"
        )
    theta1_grid = np.atleast_1d(np.asarray(theta1_grid, dtype=float))
    theta2_grid = np.atleast_1d(np.asarray(theta2_grid, dtype=float))
    if theta1_grid.size == 0 or theta2_grid.size == 0:
        raise ConfigError("theta grid is empty")

    m = cube.m
    need = 2 * m if detector not in ("nmf1", "nmf2") else m
    all_bins = range(cube.n_range_bins) if bins is None else bins
    rows = []
    for cut in all_bins:
        if not 0 <= cut < cube.n_range_bins:
            raise ConfigError(f"range bin {cut} outside cube of {cube.n_range_bins}")
        idx = secondary_indices(cube.n_range_bins, cut, window)
        if idx is None:
            continue
        if idx.size < need:
            raise WindowTooSmall(
                f"bin {cut}: window of {idx.size} secondary bins cannot support "
                f"a {need}-dimensional estimate"
            )
        x = cube.samples[cut]
        stat_map = np.full((theta1_grid.size, theta2_grid.size), np.nan)
        err = 0
        try:
            cov = _estimate_window(detector, estimator, cube.samples[idx], m)
            if detector == "m-nmf-r":
                stat_map = harness.rao_map(x, cov, theta1_grid, theta2_grid)
            else:
                for i, t1 in enumerate(theta1_grid):
                    for j, t2 in enumerate(theta2_grid):
                        steer = steering_for_angles(m, t1, t2)
                        if detector == "nmf1":
                            stat_map[i, j] = detectors.nmf(x[:m], steer[:m, 0], cov)
                        elif detector == "nmf2":
                            stat_map[i, j] = detectors.nmf(x[m:], steer[m:, 1], cov)
                        else:
                            stat_map[i, j] = detectors.clairvoyant(
                                detector, x, steer, cov
                            )
        except CrossDetectError:
            err = 1
        for i, t1 in enumerate(theta1_grid):
            for j, t2 in enumerate(theta2_grid):
                rows.append((cut, t1, t2, stat_map[i, j], err))
    return harness.CurveResult(
        f"cube:{detector}-{estimator}",
        ("range_bin", "theta1", "theta2", "statistic", "error"),
        np.asarray(rows, dtype=float),
        fingerprint="cube",
        seed=0,
    )
