import numpy as np
import pytest

from ppalab import moller_classical as mc
from ppalab import moller_quantum as mq
from ppalab.lattice import build_lattice
from ppalab.propagators import build_operator
from ppalab.series import Orders


@pytest.fixture(scope="session")
def lat():
    return build_lattice(8, 0.1, 1, 8, 0.2)


@pytest.fixture(scope="session")
def op(lat):
    return build_operator(lat, 1.0)


@pytest.fixture(scope="session")
def orders():
    return Orders(2, 2)


@pytest.fixture(scope="session")
def theory(op, orders):
    return mq.free_theory(op, orders)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def slab(lat, rng, rows, scale=1.0):
    h = np.zeros((lat.n_t, lat.n_space))
    h[rows] = scale * rng.standard_normal(h[rows].shape)
    return h.ravel()


def mass_bump(lat, rng, rows=slice(2, 4), amp=3.0):
    M = np.zeros((lat.n_t, lat.n_space))
    M[rows] = rng.uniform(-amp, amp, M[rows].shape)
    return mc.QuadraticPerturbation.from_profile(lat, M.ravel())
