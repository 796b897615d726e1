import numpy as np
import pytest
from hypothesis import settings

from dgint import charts

settings.register_profile("dgint", max_examples=25, deadline=None)
settings.load_profile("dgint")


@pytest.fixture(scope="session")
def chart():
    cache = {}

    def get(name, **kw):
        key = (name, tuple(sorted(kw.items())))
        if key not in cache:
            cache[key] = charts.load(name, **kw)
        return cache[key]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
