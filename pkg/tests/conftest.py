import numpy as np
import pytest

from idpg.latent import Product, QuadratureSpec, TruncGaussianSpec, UniformBall


@pytest.fixture
def uniform_model():
    """d=1 uniform product with c_G=2, c_R=3 (lambda=6); the analytic workhorse."""
    return Product(UniformBall(2.0, 1), UniformBall(3.0, 1))


@pytest.fixture
def gaussian_model():
    return Product(
        TruncGaussianSpec((0.4,), (50.0,), 2.0),
        TruncGaussianSpec((0.6,), (80.0,), 3.0),
    )


@pytest.fixture
def mc_scheme():
    return QuadratureSpec(method="mc", mc_samples=200_000, seed=42)


def rel_err(a, b):
    return abs(a - b) / abs(b)
