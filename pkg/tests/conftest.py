import numpy as np
import pytest

from helmfft import Grid, tune_allocator

tune_allocator()


def rand_field(grid: Grid, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal(grid.npoints) + 1j * rng.standard_normal(grid.npoints)


def relerr(x, ref) -> float:
    return float(np.linalg.norm(x - ref) / np.linalg.norm(ref))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
