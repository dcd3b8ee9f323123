import numpy as np
import pytest

from stochvec.errors import DimensionMismatch, KernelUnderresolved
from stochvec.fields import (AnalyticField, GridField, GridSpec, Mollifier,
                             constant_field, divergence, gaussian_bump,
                             gaussian_vortex, mollify, random_scalar_field,
                             random_trig_field, sample, shear_mode,
                             singular_rotational, taylor_green, trig_field,
                             zero_field, combine)
from stochvec.io import read_field_csv, write_field_csv

from conftest import fd_hessian, fd_jacobian, random_points

LIBRARY_FIELDS = [
    taylor_green(0.7),
    gaussian_vortex([0.3, -0.2], 0.5, 1.1),
    gaussian_bump(2, [0.1, 0.4], 0.6, [0.5, -0.8]),
    shear_mode([2.0, 0.0], [0.0, 1.0], 0.9, 0.3),
    random_trig_field(2, seed=5, n_modes=4),
    random_trig_field(2, seed=6, divergence_free=True),
]


@pytest.mark.parametrize("field", LIBRARY_FIELDS, ids=lambda f: f.name)
def test_jacobian_matches_finite_differences(field):
    pts = random_points(11, 100)
    exact = field.jacobian(pts)
    approx = fd_jacobian(field, pts)
    scale = max(np.abs(exact).max(), 1e-9)
    assert np.abs(exact - approx).max() / scale < 1e-6


@pytest.mark.parametrize("field", LIBRARY_FIELDS, ids=lambda f: f.name)
def test_hessian_matches_finite_differences(field):
    pts = random_points(12, 100)
    exact = field.hessian(pts)
    approx = fd_hessian(field, pts)
    scale = max(np.abs(exact).max(), 1e-9)
    assert np.abs(exact - approx).max() / scale < 1e-6


@pytest.mark.parametrize("field", [
    taylor_green(1.0),
    gaussian_vortex([0.0, 0.0], 0.4),
    shear_mode([1.0, 0.0], [0.0, 1.0], 0.5),
    random_trig_field(2, seed=7, divergence_free=True),
], ids=lambda f: f.name)
def test_divergence_free_closed_forms(field):
    pts = random_points(13, 200)
    jac = field.jacobian(pts)
    div = jac[..., 0, 0] + jac[..., 1, 1]
    assert np.abs(div).max() < 1e-12


# -- divergence on grids ------------------------------------------------------

def test_divergence_of_constant_is_zero(spec32):
    f = sample(constant_field([0.7, -1.3]), spec32)
    assert np.abs(divergence(f).values).max() == 0.0


def test_divergence_of_crossed_sines(spec64):
    f = sample(taylor_green(1.0), spec64)
    assert np.abs(divergence(f).values).max() < 1e-12


def test_divergence_linear_field_with_wrap():
    # f(x, y) = (x, 0) sampled periodically: interior stencil gives exactly 1,
    # wrap rows give 1 - n/2 (hand-applied central stencil at the seam).
    spec = GridSpec(2, np.pi, 16)
    nodes = spec.nodes()
    vals = np.stack([nodes[..., 0], np.zeros_like(nodes[..., 0])])
    f = GridField(vals, spec.extent)
    div = divergence(f).values[0]
    interior = div[1:-1, :]
    assert np.abs(interior - 1.0).max() < 1e-12
    seam = 1.0 - spec.n / 2
    assert np.abs(div[0, :] - seam).max() < 1e-12
    assert np.abs(div[-1, :] - seam).max() < 1e-12


# -- sampling -----------------------------------------------------------------

def test_sample_zero_field(spec32):
    assert np.all(sample(zero_field(2), spec32).values == 0.0)


def test_sample_linear_component(spec32):
    lin = AnalyticField(2, lambda p, t: np.stack([p[..., 0], np.zeros_like(p[..., 0])], axis=-1))
    g = sample(lin, spec32)
    i = 1 + spec32.n // 2   # node at x = dx
    j = spec32.n // 2       # node at y = 0
    assert g.values[0, i, j] == pytest.approx(spec32.dx)
    assert g.values[1, i, j] == 0.0


def test_sample_taylor_green_value(spec64):
    g = sample(taylor_green(1.0), spec64)
    # x = (pi/2, 0) is a grid node: n/2 + n/4 along axis 1, n/2 along axis 2
    i = spec64.n // 2 + spec64.n // 4
    j = spec64.n // 2
    assert g.values[0, i, j] == pytest.approx(0.0, abs=1e-15)
    assert g.values[1, i, j] == pytest.approx(1.0)


# -- grid field validation ----------------------------------------------------

def test_grid_field_rejects_nonsquare():
    with pytest.raises(DimensionMismatch):
        GridField(np.zeros((2, 8, 4)), np.pi)


def test_grid_field_rejects_nonfinite():
    vals = np.zeros((2, 8, 8))
    vals[0, 3, 3] = np.nan
    with pytest.raises(ValueError):
        GridField(vals, np.pi)


def test_grid_field_component_count(spec32):
    g = sample(taylor_green(1.0), spec32)
    assert g.values.size == g.dim * g.n ** g.dim


# -- mollifier ----------------------------------------------------------------

def test_kernel_mass_and_symmetry(spec64):
    m = Mollifier(4 * spec64.dx)
    k = m.kernel(spec64.dx, 2)
    assert abs(k.sum() - 1.0) < 1e-12
    assert np.array_equal(k, k[::-1, ::-1])


def test_mollify_underresolved_raises(spec64):
    with pytest.raises(KernelUnderresolved):
        mollify(taylor_green(1.0), Mollifier(0.5 * spec64.dx), spec64)


def test_mollify_zero_and_constant(spec32):
    z = mollify(zero_field(2), Mollifier(3 * spec32.dx), spec32)
    assert np.all(z.values == 0.0)
    c = mollify(constant_field([1.5, -0.25]), Mollifier(3 * spec32.dx), spec32)
    assert np.abs(c.values[0] - 1.5).max() < 1e-13
    assert np.abs(c.values[1] + 0.25).max() < 1e-13


def test_mollify_linear_and_sup_norm(spec32):
    m = Mollifier(3 * spec32.dx)
    f = sample(random_trig_field(2, seed=21), spec32)
    g = sample(random_trig_field(2, seed=22), spec32)
    lhs = mollify(2.0 * f + (-0.5) * g, m)
    rhs = 2.0 * mollify(f, m) + (-0.5) * mollify(g, m)
    assert np.abs(lhs.values - rhs.values).max() < 1e-13
    assert np.abs(mollify(f, m).values).max() <= np.abs(f.values).max() + 1e-14


def test_mollify_commutes_with_divergence(spec64):
    m = Mollifier(4 * spec64.dx)
    f = sample(random_trig_field(2, seed=23), spec64)
    lhs = divergence(mollify(f, m))
    rhs = mollify(divergence(f), m)
    assert np.abs(lhs.values - rhs.values).max() < 1e-10


def test_mollify_preserves_discrete_divergence_free(spec64):
    f = sample(taylor_green(1.0), spec64)
    assert np.abs(divergence(f).values).max() < 1e-13
    out = mollify(f, Mollifier(4 * spec64.dx))
    assert np.abs(divergence(out).values).max() < 10 * np.finfo(float).eps * spec64.n


def test_mollify_singular_against_quadrature_oracle():
    spec = GridSpec(2, np.pi, 128)
    eps = 4 * spec.dx
    raw = singular_rotational(amplitude=1.0)
    sampled = sample(raw, spec)
    out = mollify(sampled, Mollifier(eps))
    assert np.all(np.isfinite(out.values))

    # brute-force separable-kernel convolution at the single point x=(0.5, 0)
    w = Mollifier(eps).weights1d(spec.dx)
    r = (len(w) - 1) // 2
    ax = spec.axis()
    ix = int(np.argmin(np.abs(ax - 0.5)))
    iy = int(np.argmin(np.abs(ax - 0.0)))
    expect = np.zeros(2)
    for a, wa in zip(range(-r, r + 1), w):
        for b, wb in zip(range(-r, r + 1), w):
            expect += wa * wb * sampled.values[:, (ix - a) % spec.n, (iy - b) % spec.n]
    got = out.values[:, ix, iy]
    assert np.abs(got - expect).max() <= 0.01 * max(np.abs(expect).max(), 1e-12)


# -- combine ------------------------------------------------------------------

def test_combine_matches_manual_sum():
    f, g = taylor_green(1.0), gaussian_vortex([0.0, 0.0], 0.5)
    h = combine([f, g], [2.0, -1.0])
    pts = random_points(31, 50)
    assert np.allclose(h.value(pts), 2 * f.value(pts) - g.value(pts))
    assert np.allclose(h.jacobian(pts), 2 * f.jacobian(pts) - g.jacobian(pts))


# -- csv round trip -----------------------------------------------------------

def test_field_csv_round_trip(tmp_path, spec32):
    g = sample(random_trig_field(2, seed=41), spec32, name="demo")
    path = str(tmp_path / "field.csv")
    write_field_csv(g, path, seed=7)
    back = read_field_csv(path)
    assert back.extent == g.extent and back.n == g.n
    assert np.array_equal(back.values, g.values)


def test_scalar_field_csv_round_trip(tmp_path, spec32):
    g = sample(random_scalar_field(2, seed=42), spec32, name="scalar")
    path = str(tmp_path / "s.csv")
    write_field_csv(g, path)
    back = read_field_csv(path)
    assert back.ncomp == 1
    assert np.array_equal(back.values, g.values)
