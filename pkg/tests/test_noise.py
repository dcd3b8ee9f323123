import numpy as np
import pytest

from stochvec.errors import InvalidConfig
from stochvec.fields import constant_field, shear_mode
from stochvec.noise import (NoiseBasis, check_ellipticity, coarsen_increments,
                            covariance, covariance_derivatives,
                            ellipticity_lattice, generate_ensemble)

from conftest import random_points


def sin_basis():
    # sigma_1 = sqrt(2) (sin x2, 0): divergence-free, Q^{11}(x,y) = 2 sin x2 sin y2
    return NoiseBasis((shear_mode([0.0, 1.0], [1.0, 0.0], np.sqrt(2.0)),))


# -- covariance ---------------------------------------------------------------

def test_covariance_constant_basis_is_identity(const_basis):
    pts = random_points(1, 20)
    q = covariance(const_basis, pts, pts[::-1])
    assert np.allclose(q, np.eye(2))


def test_covariance_empty_basis_is_zero():
    basis = NoiseBasis((), dim_hint=2)
    q = covariance(basis, np.zeros((3, 2)), np.zeros((3, 2)))
    assert np.all(q == 0.0)


def test_covariance_sin_basis_hand_value():
    q = covariance(sin_basis(), np.array([0.0, np.pi / 2]), np.array([0.0, np.pi / 6]))
    assert q[0, 0] == pytest.approx(1.0)          # 2 * sin(pi/2) * sin(pi/6)
    assert abs(q[0, 1]) + abs(q[1, 0]) + abs(q[1, 1]) < 1e-15


def test_covariance_transpose_symmetry(shear_basis):
    x = random_points(2, 15)
    y = random_points(3, 15)
    assert np.allclose(covariance(shear_basis, x, y),
                       np.swapaxes(covariance(shear_basis, y, x), -1, -2))


# -- covariance derivatives ---------------------------------------------------

def test_derivatives_vanish_for_constant_basis(const_basis):
    x = random_points(4, 10)
    for which in ("d1", "d2", "d1d1", "d1d2", "d2d2"):
        assert np.all(covariance_derivatives(const_basis, x, x, which) == 0.0)


def test_d2_derivative_hand_value():
    # d2_2 Q^{11}(x, y) = 2 sin x2 cos y2 -> 2 at x=(0, pi/2), y=(0, 0)
    out = covariance_derivatives(sin_basis(), np.array([0.0, np.pi / 2]),
                                 np.array([0.0, 0.0]), "d2")
    assert out[0, 0, 1] == pytest.approx(2.0)


def test_slot_exchange_symmetry(shear_basis):
    x = random_points(5, 50)
    y = random_points(6, 50)
    d1 = covariance_derivatives(shear_basis, x, y, "d1")
    d2 = covariance_derivatives(shear_basis, y, x, "d2")
    # d1_i Q^{ab}(x, y) = d2_i Q^{ba}(y, x)
    assert np.allclose(d1, np.swapaxes(d2, -3, -2))


@pytest.mark.parametrize("which", ["d1", "d2", "d1d1", "d1d2", "d2d2"])
def test_derivatives_match_finite_differences(shear_basis, which):
    x = random_points(7, 30)
    y = random_points(8, 30)
    exact = covariance_derivatives(shear_basis, x, y, which)
    delta = 1e-4

    def q(xx, yy):
        return covariance(shear_basis, xx, yy)

    d = 2
    approx = np.zeros_like(exact)
    for i in range(d):
        e = np.zeros(d)
        e[i] = delta
        if which == "d1":
            approx[..., i] = (q(x + e, y) - q(x - e, y)) / (2 * delta)
        elif which == "d2":
            approx[..., i] = (q(x, y + e) - q(x, y - e)) / (2 * delta)
        else:
            for j in range(d):
                e2 = np.zeros(d)
                e2[j] = delta
                if which == "d1d1":
                    approx[..., i, j] = (q(x + e + e2, y) - q(x + e - e2, y)
                                         - q(x - e + e2, y) + q(x - e - e2, y)) / (4 * delta ** 2)
                elif which == "d1d2":
                    approx[..., i, j] = (q(x + e, y + e2) - q(x + e, y - e2)
                                         - q(x - e, y + e2) + q(x - e, y - e2)) / (4 * delta ** 2)
                elif which == "d2d2":
                    approx[..., i, j] = (q(x, y + e + e2) - q(x, y + e - e2)
                                         - q(x, y - e + e2) + q(x, y - e - e2)) / (4 * delta ** 2)
    scale = max(np.abs(exact).max(), 1e-9)
    assert np.abs(exact - approx).max() / scale < 1e-6


def test_diagonal_covariance_is_psd(shear_basis):
    pts = random_points(9, 100)
    q = covariance(shear_basis, pts, pts)
    assert np.linalg.eigvalsh(q).min() > -1e-12


# -- ellipticity --------------------------------------------------------------

def test_ellipticity_constant_basis(const_basis, spec32):
    rep = check_ellipticity(const_basis, ellipticity_lattice(spec32))
    assert rep.nu_est == pytest.approx(1.0)
    assert rep.pass_


def test_ellipticity_empty_basis_fails():
    rep = check_ellipticity(NoiseBasis((), dim_hint=2), np.zeros((4, 2)))
    assert rep.nu_est == 0.0 and not rep.pass_


def test_ellipticity_demo_basis(spec32):
    basis = NoiseBasis((constant_field([np.sqrt(2.0), 0.0]),
                        constant_field([0.0, 1.0]),
                        shear_mode([1.0, 0.0], [0.0, 1.0], 1.0)))
    at_peak = check_ellipticity(basis, np.array([[np.pi / 2, 0.0]]))
    assert at_peak.nu_est == pytest.approx(2.0)
    over_box = check_ellipticity(basis, ellipticity_lattice(spec32))
    assert over_box.nu_est == pytest.approx(1.0, abs=1e-9)


def test_shear_demo_basis_nu_at_least_half(shear_basis, spec32):
    rep = check_ellipticity(shear_basis, ellipticity_lattice(spec32))
    assert rep.nu_est >= 0.5


# -- Brownian ensembles -------------------------------------------------------

def test_ensemble_reproducible():
    a = generate_ensemble(3, 5, 1.0, 16, seed=99)
    b = generate_ensemble(3, 5, 1.0, 16, seed=99)
    for m in (0, 2, 4):
        assert np.array_equal(a.increments(m), b.increments(m))


def test_ensemble_order_independent():
    ens = generate_ensemble(2, 4, 1.0, 8, seed=5)
    first = ens.increments(3)
    _ = [ens.increments(m) for m in (2, 0, 1)]
    assert np.array_equal(ens.increments(3), first)


def test_ensemble_moments():
    ens = generate_ensemble(1, 10_000, 1.0, 1, seed=123)
    vals = np.concatenate([ens.increments(m)[:, 0] for m in range(ens.M)])
    assert abs(vals.mean()) < 4 * np.sqrt(ens.dt / vals.size)
    assert 0.9 * ens.dt < vals.var() < 1.1 * ens.dt


def test_ensemble_streams_uncorrelated():
    ens = generate_ensemble(1, 2, 1.0, 5000, seed=77)
    a = ens.increments(0).ravel()
    b = ens.increments(1).ravel()
    rho = np.corrcoef(a, b)[0, 1]
    assert abs(rho) < 0.05


def test_ensemble_invalid_config():
    with pytest.raises(InvalidConfig):
        generate_ensemble(0, 1, 1.0, 1, seed=0)
    with pytest.raises(InvalidConfig):
        generate_ensemble(1, 1, -1.0, 1, seed=0)
    ens = generate_ensemble(1, 2, 1.0, 4, seed=0)
    with pytest.raises(InvalidConfig):
        ens.increments(2)


def test_coarsen_increments_sums_groups():
    ens = generate_ensemble(2, 1, 1.0, 8, seed=3)
    fine = ens.increments(0)
    coarse = coarsen_increments(fine, 4)
    assert coarse.shape == (2, 2)
    assert np.allclose(coarse[0], fine[:4].sum(axis=0))
    with pytest.raises(InvalidConfig):
        coarsen_increments(fine, 3)


def test_sum_sq_bound_finite(shear_basis):
    pts = random_points(10, 64)
    bound = shear_basis.sum_sq_bound(pts)
    assert np.isfinite(bound) and bound > 0
