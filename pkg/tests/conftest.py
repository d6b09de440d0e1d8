import numpy as np
import pytest

from app.db.database import make_session_factory
from app.schemas.detection import BandGrid, Sample


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid():
    """Default band range with a lighter grid"""
    return BandGrid.geometric(0.04, 50.0, 256)


@pytest.fixture
def small_grid():
    return BandGrid.geometric(0.04, 50.0, 64)


@pytest.fixture
def gaussian_sample(rng):
    return Sample(values=rng.standard_normal(1000))


@pytest.fixture
def contaminated_sample(rng):
    """eps = 0.2, h = 4"""
    n = 1000
    switched = rng.random(n) < 0.2
    return Sample(values=rng.standard_normal(n) + 4.0 * switched)


@pytest.fixture
def db():
    """In-memory calibration store"""
    session = make_session_factory("sqlite://")()
    try:
        yield session
    finally:
        session.close()
