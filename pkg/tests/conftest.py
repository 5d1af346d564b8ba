import numpy as np
import pytest


def central_diff(f, x: np.ndarray, index, h=1e-5) -> float:
    """Central finite difference of scalar ``f()`` w.r.t. ``x[index]`` (``x`` mutated in place)."""
    orig = x[index]
    x[index] = orig + h
    up = f()
    x[index] = orig - h
    down = f()
    x[index] = orig
    return (up - down) / (2 * h)


def rel_err(a, b, floor=1e-3):
    """Relative error with an absolute floor so near-zero gradients do not blow up."""
    return abs(a - b) / max(abs(a), abs(b), floor)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
