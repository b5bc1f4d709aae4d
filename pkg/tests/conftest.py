import numpy as np
import pytest

from gaitfuse.tensor import Tensor


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def rand_tensor(rng, shape, scale=1.0):
    return Tensor((rng.normal(size=shape) * scale).astype(np.float32))
