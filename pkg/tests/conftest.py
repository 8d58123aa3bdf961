import numpy as np
import pytest

from pevsel import MarkerMatrix, center_scale


def make_marker_matrix(rng, n, m, dosage=True, prefix="i"):
    """Random raw marker matrix (integer dosages with tiny jitter by default)."""
    if dosage:
        values = rng.integers(0, 3, size=(n, m)).astype(float)
        values += rng.normal(0.0, 0.01, size=(n, m))
    else:
        values = rng.standard_normal((n, m))
    ids = tuple(f"{prefix}{j:03d}" for j in range(n))
    names = tuple(f"c{j:03d}" for j in range(m))
    return MarkerMatrix(ids, values, names)


def make_scaled(rng, n, m, dosage=True, prefix="i"):
    return center_scale(make_marker_matrix(rng, n, m, dosage=dosage, prefix=prefix))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
