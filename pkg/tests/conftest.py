import numpy as np
import pytest

from dmimo import ArrayGeometry, perimeter_geometry


def crandn(rng, *shape) -> np.ndarray:
    """Standard circularly symmetric complex Gaussian array."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240117)


@pytest.fixture
def geometry():
    """Default 64-antenna perimeter deployment (8 APs of 8)."""
    return perimeter_geometry()


@pytest.fixture
def small_geometry():
    """Two 4-antenna APs on a line, handy for cheap exact checks."""
    lam = 0.115
    positions = [[i * lam / 2, 0.0, 0.0] for i in range(8)]
    return ArrayGeometry(
        antenna_positions=positions,
        ap_partition=((0, 1, 2, 3), (4, 5, 6, 7)),
        wavelength=lam,
    )
