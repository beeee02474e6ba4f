import numpy as np
import pytest

from curvflow import sphere_mesh


@pytest.fixture(scope="session")
def meshes():
    """Icospheres shared across the whole run, keyed by level."""
    cache = {}

    def get(level: int):
        if level not in cache:
            cache[level] = sphere_mesh.build_icosphere(level)
        return cache[level]

    return get


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
