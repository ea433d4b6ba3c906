import numpy as np
import pytest

from hsia.model import PatchClassifier


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_rng(seed):
    return np.random.default_rng(seed)


def tiny_model(seed=0, components=4, size=9, num_classes=3, dtype=np.float32, zero_init=False):
    return PatchClassifier.build(components, size, num_classes, seed=seed,
                                 dtype=dtype, zero_init=zero_init)


def away_from_kinks(rng, shape, margin=0.05):
    """Random float64 tensor with entries nudged away from zero (ReLU kinks)."""
    x = rng.standard_normal(shape)
    return x + margin * np.sign(x)
