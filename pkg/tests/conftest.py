import numpy as np
import pytest

from stochvec.fields import GridSpec, gaussian_vortex, taylor_green
from stochvec.noise import constant_basis, constant_plus_shear_basis


@pytest.fixture(scope="session")
def spec32():
    return GridSpec(2, np.pi, 32)


@pytest.fixture(scope="session")
def spec64():
    return GridSpec(2, np.pi, 64)


@pytest.fixture(scope="session")
def const_basis():
    return constant_basis(2)


@pytest.fixture(scope="session")
def shear_basis():
    return constant_plus_shear_basis(2, amplitude=0.25)


@pytest.fixture(scope="session")
def vortex_b0():
    return gaussian_vortex([0.0, 0.0], 0.5, 1.0)


@pytest.fixture(scope="session")
def tg_drift():
    return taylor_green(0.5)


def random_points(seed, count, dim=2, extent=np.pi):
    rng = np.random.default_rng(seed)
    return rng.uniform(-extent, extent, size=(count, dim))


def fd_jacobian(field, pts, delta=1e-4, t=0.0):
    """Central finite differences of field.value; oracle for exact jacobians."""
    pts = np.asarray(pts, dtype=float)
    d = pts.shape[-1]
    cols = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = delta
        cols.append((field.value(pts + e, t) - field.value(pts - e, t)) / (2 * delta))
    return np.stack(cols, axis=-1)


def fd_hessian(field, pts, delta=1e-4, t=0.0):
    """Central finite differences of field.jacobian."""
    pts = np.asarray(pts, dtype=float)
    d = pts.shape[-1]
    cols = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = delta
        cols.append((field.jacobian(pts + e, t) - field.jacobian(pts - e, t)) / (2 * delta))
    return np.stack(cols, axis=-1)
