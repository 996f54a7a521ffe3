import numpy as np
import pytest

from weavecount.imgproc import GrayImage


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def random_image(rng):
    return GrayImage(rng.random((32, 32)), 200.0)


def perfect_grid(spacing_x: float, spacing_y: float, width: int = 200, height: int = 200) -> np.ndarray:
    """Regular lattice of (x, y) points covering the given extent."""
    xs = np.arange(spacing_x / 2, width - 1e-9, spacing_x)
    ys = np.arange(spacing_y / 2, height - 1e-9, spacing_y)
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])
