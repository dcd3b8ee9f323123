import numpy as np
import pytest

from stochvec.errors import BlowUp, InverseToleranceExceeded
from stochvec.fields import (AnalyticField, GridSpec, constant_field,
                             gaussian_bump, gaussian_vortex, sample,
                             taylor_green, wrap_coords)
from stochvec.flow import (GridInterpolant, integrate_forward, integrate_inverse,
                           integrate_jacobian, periodic_distance,
                           solve_spde_sample, weak_form_residual)
from stochvec.lie import assemble_coefficients
from stochvec.noise import NoiseBasis, coarsen_increments, generate_ensemble

from conftest import random_points

EXTENT = np.pi


def shear_sigma(c=0.3):
    """sigma(x) = (0, c x1): single-mode linear SDE with closed-form flow."""

    def val(p, t):
        return np.stack([np.zeros_like(p[..., 0]), c * p[..., 0]], axis=-1)

    def jac(p, t):
        out = np.zeros(p.shape[:-1] + (2, 2))
        out[..., 1, 0] = c
        return out

    def hess(p, t):
        return np.zeros(p.shape[:-1] + (2, 2, 2))

    return AnalyticField(2, val, jac, hess, name="linear_shear")


# -- additive noise exactness --------------------------------------------------

def test_additive_forward_is_translation(const_basis):
    ens = generate_ensemble(2, 1, 0.5, 64, seed=1)
    dW = ens.increments(0)
    x0 = random_points(2, 50, extent=2.0)
    X, _ = integrate_forward(x0, None, const_basis, dW, ens.dt, EXTENT)
    expect = wrap_coords(x0 + dW.sum(axis=0), EXTENT)
    assert periodic_distance(X, expect, EXTENT).max() < 1e-12


def test_additive_inverse_is_backward_translation(const_basis):
    ens = generate_ensemble(2, 1, 0.5, 64, seed=2)
    dW = ens.increments(0)
    x = random_points(3, 50, extent=2.0)
    Y = integrate_inverse(x, None, const_basis, dW, ens.dt, EXTENT)
    expect = wrap_coords(x - dW.sum(axis=0), EXTENT)
    assert periodic_distance(Y, expect, EXTENT).max() < 1e-12


def test_additive_jacobian_stays_identity(const_basis):
    ens = generate_ensemble(2, 1, 1.0, 32, seed=3)
    x0 = random_points(4, 20, extent=2.0)
    _, J = integrate_jacobian(x0, None, const_basis, ens.increments(0), ens.dt, EXTENT)
    assert np.abs(J - np.eye(2)).max() == 0.0


def test_no_noise_no_drift_is_identity():
    basis = NoiseBasis((), dim_hint=2)
    dW = np.zeros((16, 0))
    x0 = random_points(5, 30)
    X, _ = integrate_forward(x0, None, basis, dW, 1 / 16, EXTENT)
    assert periodic_distance(X, x0, EXTENT).max() == 0.0
    Y = integrate_inverse(x0, None, basis, dW, 1 / 16, EXTENT)
    assert periodic_distance(Y, x0, EXTENT).max() == 0.0


# -- linear shear closed form ---------------------------------------------------

def test_shear_flow_is_exact():
    # sigma depends only on the frozen component, so Heun reproduces the
    # closed form X2 = X2_0 + c X1_0 W_t to rounding at any step size
    c = 0.3
    basis = NoiseBasis((shear_sigma(c),))
    T = 1.0
    for level in (16, 256):
        ens = generate_ensemble(1, 1, T, level, seed=6)
        dW = ens.increments(0)
        x0 = random_points(7, 40, extent=1.0)
        exact = np.stack([x0[:, 0], x0[:, 1] + c * x0[:, 0] * dW.sum()], axis=-1)
        X, _ = integrate_forward(x0, None, basis, dW, T / level, EXTENT)
        assert periodic_distance(X, wrap_coords(exact, EXTENT), EXTENT).max() < 1e-12


def geometric_sigma(c=0.3):
    """sigma(x) = (0, c x2): closed form X2 = X2_0 exp(c W_t) (Stratonovich)."""

    def val(p, t):
        return np.stack([np.zeros_like(p[..., 0]), c * p[..., 1]], axis=-1)

    def jac(p, t):
        out = np.zeros(p.shape[:-1] + (2, 2))
        out[..., 1, 1] = c
        return out

    def hess(p, t):
        return np.zeros(p.shape[:-1] + (2, 2, 2))

    return AnalyticField(2, val, jac, hess, name="geometric")


def test_geometric_strong_convergence_first_order():
    # strong error E|X - X_exact| over 64 shared paths decays at order one
    c = 0.6
    basis = NoiseBasis((geometric_sigma(c),))
    T = 1.0
    n_fine = 256
    n_paths = 64
    ens = generate_ensemble(1, n_paths, T, n_fine, seed=6)
    fine = np.stack([ens.increments(m) for m in range(n_paths)], axis=1)  # (N, M, 1)
    x0 = np.tile([0.0, 0.4], (n_paths, 1))
    W_T = fine.sum(axis=0)[:, 0]
    exact2 = 0.4 * np.exp(c * W_T)
    errs, dts = [], []
    for level in (16, 32, 64, 128, 256):
        step = n_fine // level
        dW = fine.reshape(level, step, n_paths, 1).sum(axis=1)
        X, _ = integrate_forward(x0, None, basis, dW, T / level, EXTENT)
        errs.append(np.abs(X[:, 1] - exact2).mean())
        dts.append(T / level)
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert slope > 0.8
    assert errs[-1] < 1e-3


def test_shear_jacobian_closed_form():
    c = 0.3
    basis = NoiseBasis((shear_sigma(c),))
    T = 1.0
    N = 256
    ens = generate_ensemble(1, 1, T, N, seed=8)
    dW = ens.increments(0)
    x0 = random_points(9, 20, extent=1.0)
    _, J = integrate_jacobian(x0, None, basis, dW, T / N, EXTENT)
    W_T = dW.sum()
    expect = np.array([[1.0, 0.0], [c * W_T, 1.0]])
    assert np.abs(J - expect).max() < 1e-2


def test_inverse_roundtrip_first_order(shear_basis, tg_drift):
    T = 0.5
    n_fine = 256
    fine = generate_ensemble(shear_basis.K, 1, T, n_fine, seed=10).increments(0)
    x = random_points(11, 30)
    errs, dts = [], []
    for level in (16, 64, 256):
        dW = coarsen_increments(fine, n_fine // level)
        dt = T / level
        y = integrate_inverse(x, tg_drift, shear_basis, dW, dt, EXTENT)
        x_back, _ = integrate_forward(y, tg_drift, shear_basis, dW, dt, EXTENT)
        errs.append(periodic_distance(x_back, x, EXTENT).max())
        dts.append(dt)
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert slope > 0.8


# -- volume preservation ---------------------------------------------------------

def test_det_jacobian_near_one_divergence_free(shear_basis, tg_drift):
    T = 1.0
    N = 256
    ens = generate_ensemble(shear_basis.K, 3, T, N, seed=12)
    x0 = random_points(13, 64)
    worst = 0.0
    for m in range(3):
        _, J = integrate_jacobian(x0, tg_drift, shear_basis, ens.increments(m),
                                  T / N, EXTENT)
        worst = max(worst, np.abs(np.linalg.det(J) - 1.0).max())
    assert worst <= 1e-3


# -- error paths -----------------------------------------------------------------

def test_blowup_on_nonfinite_drift(const_basis):
    bad = AnalyticField(2, lambda p, t: np.full_like(p, np.nan))
    dW = np.zeros((4, 2))
    with pytest.raises(BlowUp):
        integrate_forward(random_points(14, 5), bad, const_basis, dW, 0.25, EXTENT)


def test_inverse_tolerance_exceeded(shear_basis, tg_drift, spec32):
    dW = generate_ensemble(shear_basis.K, 1, 0.25, 16, seed=15).increments(0)
    with pytest.raises(InverseToleranceExceeded):
        solve_spde_sample(gaussian_vortex([0.0, 0.0], 0.5), tg_drift, shear_basis,
                          dW, 0.25 / 16, spec32, tol_inv=1e-14)


# -- representation formula -------------------------------------------------------

def test_spde_sample_zero_initial(const_basis, spec32):
    dW = generate_ensemble(2, 1, 0.25, 16, seed=16).increments(0)
    from stochvec.fields import zero_field
    s = solve_spde_sample(zero_field(2), None, const_basis, dW, 0.25 / 16, spec32)
    assert np.all(s.field.values == 0.0)


def test_spde_sample_translation(const_basis, spec64, vortex_b0):
    ens = generate_ensemble(2, 1, 0.25, 64, seed=17)
    dW = ens.increments(0)
    s = solve_spde_sample(vortex_b0, None, const_basis, dW, ens.dt, spec64)
    W = dW.sum(axis=0)
    expect = vortex_b0.value(wrap_coords(spec64.nodes() - W, EXTENT))
    got = np.moveaxis(s.field.values, 0, -1)
    assert np.abs(got - expect).max() < 1e-12
    assert s.diagnostics["max_abs_det_minus_one"] == 0.0


def test_spde_sample_interpolated_initial(const_basis, spec64, vortex_b0):
    # band-limited B0 carried as a grid: periodic cubic interpolation error only
    b0_grid = sample(taylor_green(1.0), spec64)
    ens = generate_ensemble(2, 1, 0.25, 64, seed=18)
    dW = ens.increments(0)
    s = solve_spde_sample(b0_grid, None, const_basis, dW, ens.dt, spec64)
    W = dW.sum(axis=0)
    expect = taylor_green(1.0).value(wrap_coords(spec64.nodes() - W, EXTENT))
    got = np.moveaxis(s.field.values, 0, -1)
    assert np.abs(got - expect).max() < 1e-3


def test_spde_sample_shear_constant_initial(spec32):
    c = 0.3
    basis = NoiseBasis((shear_sigma(c),))
    N = 256
    ens = generate_ensemble(1, 1, 1.0, N, seed=19)
    dW = ens.increments(0)
    b0 = constant_field([0.7, -0.2])
    s = solve_spde_sample(b0, None, basis, dW, 1.0 / N, spec32, tol_inv=5e-2)
    W = dW.sum()
    expect = np.array([[1.0, 0.0], [c * W, 1.0]]) @ np.array([0.7, -0.2])
    idx = [(4, 7), (16, 16), (20, 3), (9, 28), (30, 30)]
    for i, j in idx:
        assert np.abs(s.field.values[:, i, j] - expect).max() < 2e-2


def test_spde_sample_linear_in_initial(const_basis, spec32, vortex_b0):
    other = gaussian_bump(2, [0.4, 0.1], 0.45, [0.3, 0.9])
    ens = generate_ensemble(2, 1, 0.25, 32, seed=20)
    dW = ens.increments(0)

    from stochvec.fields import combine
    combo = combine([vortex_b0, other], [2.0, -0.7])
    s_combo = solve_spde_sample(combo, None, const_basis, dW, ens.dt, spec32)
    s_a = solve_spde_sample(vortex_b0, None, const_basis, dW, ens.dt, spec32)
    s_b = solve_spde_sample(other, None, const_basis, dW, ens.dt, spec32)
    expect = 2.0 * s_a.field.values - 0.7 * s_b.field.values
    assert np.abs(s_combo.field.values - expect).max() < 1e-12


def test_sup_norm_bound_via_jacobian(shear_basis, tg_drift, spec32, vortex_b0):
    ens = generate_ensemble(shear_basis.K, 1, 0.25, 64, seed=21)
    s = solve_spde_sample(vortex_b0, tg_drift, shear_basis, ens.increments(0),
                          ens.dt, spec32)
    sup_b0 = np.abs(vortex_b0.value(spec32.nodes())).max() * 1.001
    bound = (1 + 0.05) * sup_b0 * s.diagnostics["max_jacobian_norm"]
    assert np.abs(s.field.values).max() <= bound


# -- grid interpolant -------------------------------------------------------------

def test_grid_interpolant_accuracy(spec64, tg_drift):
    interp = GridInterpolant(sample(tg_drift, spec64))
    pts = random_points(22, 200)
    got = interp.value(pts)
    expect = tg_drift.value(pts)
    assert np.abs(got - expect).max() < 1e-4
    gotj = interp.jacobian(pts)
    expectj = tg_drift.jacobian(pts)
    assert np.abs(gotj - expectj).max() < 5e-3


# -- weak-form residual ------------------------------------------------------------

def test_weak_residual_zero_initial(const_basis, spec32):
    from stochvec.fields import zero_field
    coeffs = assemble_coefficients(const_basis)
    phi = gaussian_bump(2, [0.0, 0.0], 0.6, [1.0, 0.5])
    dW = generate_ensemble(2, 1, 0.25, 16, seed=23).increments(0)
    _, res = weak_form_residual(zero_field(2), None, const_basis, dW, 0.25 / 16,
                                spec32, phi, coeffs)
    assert np.abs(res).max() == 0.0


def test_weak_residual_linear_in_phi(const_basis, spec32, vortex_b0):
    coeffs = assemble_coefficients(const_basis)
    phi1 = gaussian_bump(2, [0.2, 0.0], 0.5, [1.0, 0.0])
    phi2 = gaussian_bump(2, [-0.3, 0.2], 0.6, [0.0, 1.0])
    from stochvec.fields import combine
    both = combine([phi1, phi2], [1.0, 1.0])
    dW = generate_ensemble(2, 1, 0.25, 32, seed=24).increments(0)
    args = (vortex_b0, None, const_basis, dW, 0.25 / 32, spec32)
    _, r1 = weak_form_residual(*args, phi1, coeffs)
    _, r2 = weak_form_residual(*args, phi2, coeffs)
    _, rb = weak_form_residual(*args, both, coeffs)
    assert np.abs(rb - (r1 + r2)).max() < 1e-10


def test_weak_residual_first_order_decay(const_basis, vortex_b0):
    # rms over paths of the per-path residual: averaging tames the random
    # prefactor so the order-one trend is fittable on 4 points
    spec = GridSpec(2, np.pi, 32)
    coeffs = assemble_coefficients(const_basis)
    phi = gaussian_bump(2, [0.3, -0.2], 0.55, [0.9, -0.4])
    T = 0.25
    n_fine = 128
    n_paths = 24
    ens = generate_ensemble(2, n_paths, T, n_fine, seed=25)
    dts, errs = [], []
    for level in (16, 32, 64, 128):
        per_path = []
        for m in range(n_paths):
            dW = coarsen_increments(ens.increments(m), n_fine // level)
            _, res = weak_form_residual(vortex_b0, None, const_basis, dW, T / level,
                                        spec, phi, coeffs)
            per_path.append(np.abs(res).max())
        errs.append(np.sqrt(np.mean(np.square(per_path))))
        dts.append(T / level)
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert slope > 0.8


def test_positions_stay_wrapped(shear_basis, tg_drift):
    ens = generate_ensemble(shear_basis.K, 1, 2.0, 128, seed=26)
    x0 = random_points(27, 40)
    X, _ = integrate_forward(x0, tg_drift, shear_basis, ens.increments(0),
                             2.0 / 128, EXTENT)
    assert np.all(np.abs(X) <= EXTENT)


def test_flow_sample_carrier(shear_basis, tg_drift):
    from stochvec.flow import FlowSample
    ens = generate_ensemble(shear_basis.K, 1, 0.5, 128, seed=28)
    dW = ens.increments(0)
    x0 = random_points(29, 32)
    X, J = integrate_jacobian(x0, tg_drift, shear_basis, dW, 0.5 / 128, EXTENT)
    fs = FlowSample(0, X, J, dW, time_index=128)
    assert np.abs(fs.det_jacobians() - 1.0).max() < 1e-3
    assert np.all(np.abs(fs.positions) <= EXTENT)
    bare = FlowSample(0, X, None, dW)
    import pytest as _pytest
    from stochvec.errors import DimensionMismatch
    with _pytest.raises(DimensionMismatch):
        bare.det_jacobians()
