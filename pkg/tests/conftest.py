import numpy as np
import pytest

from crossdetect.clutter import ClutterScene, TextureModel
from crossdetect.scene import ArrayGeometry, CovarianceModelParams


def rng(seed=0):
    return np.random.default_rng(seed)


def random_hpd(rng, n, scale=1.0):
    """Random well-conditioned Hermitian positive definite matrix."""
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * (a @ a.conj().T / n + np.eye(n))


def random_snapshot(rng, n):
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * np.sqrt(0.5)


@pytest.fixture
def small_scene():
    return ClutterScene(
        ArrayGeometry(8),
        CovarianceModelParams(3e-4, 0.4, 0.9),
        TextureModel("gaussian"),
    )


@pytest.fixture
def k_scene():
    return ClutterScene(
        ArrayGeometry(8),
        CovarianceModelParams(3e-4, 0.4, 0.9),
        TextureModel("gamma", 0.5),
    )
