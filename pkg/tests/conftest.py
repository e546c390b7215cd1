import numpy as np
import pytest

from core.config import reset_settings


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _fresh_settings():
    reset_settings()
    yield
    reset_settings()


@pytest.fixture
def client():
    from fastapi.testclient import TestClient

    from api.main import app
    from api.models.base import Base, create_all
    from core.db import engine

    # no context manager: the lifespan (and its worker) stays off
    create_all(engine)
    yield TestClient(app)
    Base.metadata.drop_all(bind=engine)
