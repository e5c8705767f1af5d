"""
Shared fixtures for the test suite.
"""
import os
import pytest
from functools import lru_cache
from pathlib import Path
import sys

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.data import ToySceneSpec, make_toy_dataset

INCEPTION_ENV = "SIM2REAL_INCEPTION_WEIGHTS"


def pytest_collection_modifyitems(config, items):
    """Skip ``pretrained`` tests unless Inception weights are available."""
    weights = os.environ.get(INCEPTION_ENV)
    if weights and Path(weights).is_file():
        return
    skip = pytest.mark.skip(reason=f"{INCEPTION_ENV} does not point to a weights file")
    for item in items:
        if item.get_closest_marker("pretrained"):
            item.add_marker(skip)


@lru_cache(maxsize=None)
def _toy(num_images: int, height: int, width: int, num_classes: int, seed: int):
    return make_toy_dataset(ToySceneSpec(num_images=num_images, height=height, width=width,
                                         num_classes=num_classes, seed=seed))


@pytest.fixture(scope="session")
def toy_factory():
    """
    Build (and cache) toy synthetic/real pairs.

    Usage: ``toy_factory(num_images=12, height=32, width=64, seed=2)``
    """
    def factory(num_images=12, height=32, width=64, num_classes=4, seed=7):
        return _toy(num_images, height, width, num_classes, seed)
    return factory


@pytest.fixture
def inception_weights():
    """Path of the Inception-v3 state dict named by the environment."""
    return os.environ[INCEPTION_ENV]
