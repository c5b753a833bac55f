import numpy as np
import pytest

from sspf.model import BinGeometry, ModelParams


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_unit(rng, shape):
    v = rng.standard_normal(shape)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


@pytest.fixture
def small_params(rng):
    """Three speakers, two channels, 8-dim embeddings, 36 bins."""
    mu = random_unit(rng, (3, 8))
    A = np.array([[0.8, 0.1, 0.1], [0.2, 0.7, 0.1], [0.25, 0.25, 0.5]])
    return ModelParams(mu, A, N=2, gamma=5.0, sigma_move=20.0, kappa=4.0, bins=BinGeometry(36))
