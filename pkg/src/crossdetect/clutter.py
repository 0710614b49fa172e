"""Random generation: speckle, textures, snapshots and secondary data.

The clutter model is a per-array mixture of scaled Gaussians: a jointly
correlated complex circular Gaussian speckle vector c ~ CN(0, M), scaled
per array by independent texture draws,

    z = blkdiag(sqrt(tau1) I_m, sqrt(tau2) I_m) c.

Textures are drawn independently per snapshot (range bin) and between
the two arrays; the Gaussian model fixes tau = 1.

All samplers take an explicit numpy Generator.  Monte-Carlo shards build
their streams from a master seed via SeedSequence so results are
reproducible under parallel execution.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from . import hermitian
from .errors import DimensionMismatch, EmptyBatch
from .scene import ArrayGeometry, CovarianceModelParams, build_covariance

GAUSSIAN = "gaussian"
GAMMA_K = "gamma"


@dataclass(frozen=True)
class TextureModel:
    """Texture law: Gaussian (tau = 1) or Gamma(nu, 1/nu) for K-clutter."""

    kind: str = GAUSSIAN
    nu: float = 0.5

    def __post_init__(self):
        if self.kind not in (GAUSSIAN, GAMMA_K):
            raise ValueError(f"unknown texture kind {self.kind!r}")
        if self.kind == GAMMA_K and self.nu <= 0:
            raise ValueError(f"nu must be positive, got {self.nu}")


@dataclass(frozen=True)
class ClutterScene:
    """Covariance model plus texture law; caches the factorized covariance."""

    geometry: ArrayGeometry
    covariance_params: CovarianceModelParams
    texture: TextureModel = TextureModel()

    @property
    def m(self) -> int:
        return self.geometry.m

    @cached_property
    def covariance(self) -> np.ndarray:
        return build_covariance(self.geometry, self.covariance_params)

    @cached_property
    def chol(self) -> np.ndarray:
        return hermitian.cholesky_factor(self.covariance)

    def with_texture(self, texture: TextureModel) -> "ClutterScene":
        return replace(self, texture=texture)


@dataclass
class SnapshotBatch:
    """K snapshots of length 2m with their ground-truth textures."""

    x: np.ndarray  # (K, 2m) complex
    tau1: np.ndarray | None = None  # (K,)
    tau2: np.ndarray | None = None  # (K,)

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=complex))
        if self.x.shape[0] < 1:
            raise EmptyBatch("batch must contain at least one snapshot")
        if self.x.shape[1] % 2:
            raise DimensionMismatch(f"snapshot length {self.x.shape[1]} is odd")

    @property
    def count(self) -> int:
        return self.x.shape[0]

    @property
    def m(self) -> int:
        return self.x.shape[1] // 2


def sample_speckle(chol, rng, size=None) -> np.ndarray:
    """Draw CN(0, M) vectors given the lower Cholesky factor of M.

    Returns shape (2m,) when size is None, else (size, 2m).
    """
    n = chol.shape[0]
    shape = (n,) if size is None else (size, n)
    g = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    g *= np.sqrt(0.5)
    return g @ chol.conj().T if size is not None else chol @ g


def sample_texture(model: TextureModel, rng, size=None):
    """Draw the per-array texture pair (tau1, tau2).

    Gaussian: (1, 1).  GammaK(nu): independent Gamma(nu, 1/nu) draws,
    mean 1 and variance 1/nu.
    """
    shape = () if size is None else (size,)
    if model.kind == GAUSSIAN:
        ones = np.ones(shape) if size is not None else 1.0
        return ones, (np.ones(shape) if size is not None else 1.0)
    tau1 = rng.gamma(model.nu, 1.0 / model.nu, size=shape)
    tau2 = rng.gamma(model.nu, 1.0 / model.nu, size=shape)
    return tau1, tau2


def _scale_by_texture(speckle, tau1, tau2, m):
    out = np.array(speckle, copy=True)
    s1 = np.sqrt(np.asarray(tau1, dtype=float))
    s2 = np.sqrt(np.asarray(tau2, dtype=float))
    if s1.ndim:
        s1 = s1[..., None]
    if s2.ndim:
        s2 = s2[..., None]
    out[..., :m] *= s1
    out[..., m:] *= s2
    return out


def sample_snapshot(scene: ClutterScene, rng) -> tuple[np.ndarray, float, float]:
    """One MSG snapshot z = blkdiag(sqrt(tau_i) I) c plus its textures."""
    c = sample_speckle(scene.chol, rng)
    tau1, tau2 = sample_texture(scene.texture, rng)
    return _scale_by_texture(c, tau1, tau2, scene.m), float(tau1), float(tau2)


def make_secondary(scene: ClutterScene, count: int, rng) -> SnapshotBatch:
    """K i.i.d. signal-free snapshots with per-snapshot textures."""
    if count < 1:
        raise EmptyBatch(f"need at least one snapshot, got {count}")
    c = sample_speckle(scene.chol, rng, size=count)
    tau1, tau2 = sample_texture(scene.texture, rng, size=count)
    return SnapshotBatch(_scale_by_texture(c, tau1, tau2, scene.m), tau1, tau2)


def inject_target(x, steering, alpha) -> np.ndarray:
    """Add the rank-2 target component P alpha to a snapshot (batched ok)."""
    x = np.asarray(x, dtype=complex)
    alpha = np.asarray(alpha, dtype=complex)
    if steering.shape[0] != x.shape[-1] or alpha.shape[-1] != steering.shape[1]:
        raise DimensionMismatch(
            f"snapshot length {x.shape[-1]}, steering {steering.shape}, "
            f"alpha {alpha.shape}"
        )
    return x + alpha @ steering.T if alpha.ndim > 1 else x + steering @ alpha


def corrupt_batch(batch: SnapshotBatch, steering, alpha, index: int) -> SnapshotBatch:
    """Return a copy of the batch with a target added at one snapshot."""
    if not 0 <= index < batch.count:
        raise IndexError(f"index {index} outside batch of {batch.count}")
    x = np.array(batch.x, copy=True)
    x[index] = inject_target(x[index], steering, alpha)
    tau1 = None if batch.tau1 is None else np.array(batch.tau1, copy=True)
    tau2 = None if batch.tau2 is None else np.array(batch.tau2, copy=True)
    return SnapshotBatch(x, tau1, tau2)


def shard_rng(master_seed: int, tag: str, shard: int) -> np.random.Generator:
    """Deterministic per-shard RNG stream, independent of worker count."""
    digest = hashlib.blake2b(tag.encode("utf-8"), digest_size=8).digest()
    tag_key = int.from_bytes(digest, "little")
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(tag_key, shard))
    return np.random.Generator(np.random.Philox(seq))
