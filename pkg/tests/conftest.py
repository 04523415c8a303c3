import numpy as np
import pytest

from bprag import build_store


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_store(rng):
    return build_store(rng.standard_normal((40, 64)), ids=np.arange(100, 140))


def naive_dot(a, b):
    total = 0
    for x, y in zip(a, b):
        total += int(x) * int(y)
    return total


def reference_bits(values):
    """Plane rows as Python lists: plane p holds bit 7-p of each two's-complement byte."""
    planes = []
    for p in range(8):
        planes.append([((int(v) & 0xFF) >> (7 - p)) & 1 for v in values])
    return planes
