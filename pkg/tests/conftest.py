import numpy as np
import pytest

from heliofit import SceneSpec, build_transport


@pytest.fixture(scope="session")
def transport_default_128():
    """Default scene (albedo 0.8), 128x128 skyangular environment."""
    return build_transport(SceneSpec(), 128)


@pytest.fixture(scope="session")
def transport_white_128():
    """Albedo-1 scene for furnace-style checks."""
    return build_transport(SceneSpec(albedo=1.0), 128)


@pytest.fixture(scope="session")
def transport_default_64():
    """Small environment for fast fitting unit tests."""
    return build_transport(SceneSpec(), 64)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240831)
