import numpy as np
import pytest

from quakefit.catalog import Catalog


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def make_catalog(t, mag=None, lon=None, lat=None, depth=None, **kw):
    t = np.asarray(t, dtype=float)
    n = t.size
    z = np.zeros(n)
    return Catalog(t,
                   z if lon is None else np.asarray(lon, float),
                   z if lat is None else np.asarray(lat, float),
                   z if depth is None else np.asarray(depth, float),
                   z if mag is None else np.asarray(mag, float), **kw)
