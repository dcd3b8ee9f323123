"""Structural verification harness for the noise operator.

Bundles the checks behind the ``verify-operator`` subcommand: ellipticity of
the covariance diagonal, bracket-vs-coefficient agreement, adjoint duality
under box quadrature, the coercivity constant, and the interpolation-ratio
sweep with a singular weight.
"""

from __future__ import annotations

import numpy as np

from .fields import (GridField, GridSpec, gaussian_bump, gaussian_vortex,
                     integrate, random_scalar_field, random_trig_field, sample)
from .lie import (OperatorCoefficients, apply_L_adjoint, apply_L_by_brackets,
                  apply_L_by_coefficients, coercivity_check, interpolation_ratio)
from .noise import NoiseBasis, check_ellipticity, ellipticity_lattice, shear_mode
from .noise import constant_basis

__all__ = [
    "random_shear_basis", "bracket_vs_coeff_max_err", "adjoint_duality_err",
    "interpolation_max_ratio", "operator_report",
]


def random_shear_basis(dim: int, seed: int, n_shear: int = 2,
                       amplitude: float = 0.4, with_constants: bool = True,
                       n_composite: int = 1) -> NoiseBasis:
    """Constants, random orthogonal shears, and composite stream-function
    modes; always divergence-free.

    Pure orthogonal shears have (sigma . grad) sigma = 0, which silently
    zeroes several operator coefficients, so composite multi-mode fields are
    mixed in to exercise every term.
    """
    rng = np.random.default_rng(seed)
    sigmas = list(constant_basis(dim).sigmas) if with_constants else []
    for _ in range(n_shear):
        k = rng.integers(-2, 3, size=dim).astype(float)
        if not np.any(k):
            k[rng.integers(dim)] = 1.0
        perp = np.array([-k[1], k[0]]) if dim == 2 else _any_perp(k, rng)
        perp = perp / np.linalg.norm(perp)
        sigmas.append(shear_mode(k, perp, amplitude * rng.uniform(0.5, 1.0),
                                 rng.uniform(0, 2 * np.pi)))
    for _ in range(n_composite):
        sigmas.append(random_trig_field(dim, int(rng.integers(2 ** 31)), n_modes=3,
                                        kmax=2, amplitude=amplitude,
                                        divergence_free=True))
    return NoiseBasis(tuple(sigmas))


def _any_perp(k, rng):
    v = rng.normal(size=k.size)
    v -= (v @ k) / (k @ k) * k
    return v


def bracket_vs_coeff_max_err(seed: int = 0, n_triples: int = 100, dim: int = 2,
                             extent: float = np.pi) -> float:
    """Max relative gap between nested-bracket and coefficient-form operator.

    Each triple draws a fresh random basis, a random analytic field, and a
    random point.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_triples):
        basis = random_shear_basis(dim, int(rng.integers(2 ** 31)),
                                   n_shear=int(rng.integers(1, 4)))
        coeffs = OperatorCoefficients(basis)
        B = random_trig_field(dim, int(rng.integers(2 ** 31)), n_modes=3)
        x = rng.uniform(-extent, extent, size=(1, dim))
        byb = apply_L_by_brackets(basis, B, x)
        byc = apply_L_by_coefficients(coeffs, B, x)
        scale = max(float(np.max(np.abs(byb))), 1e-12)
        worst = max(worst, float(np.max(np.abs(byb - byc))) / scale)
    return worst


def adjoint_duality_err(basis: NoiseBasis, n: int = 128, extent: float = np.pi,
                        seed: int = 0) -> float:
    """Relative defect of <L B, phi> = <B, L* phi> under box quadrature."""
    spec = GridSpec(basis.dim, extent, n)
    rng = np.random.default_rng(seed)
    coeffs = OperatorCoefficients(basis)
    B = gaussian_vortex(rng.uniform(-0.5, 0.5, size=2), 0.55, 1.0)
    phi = gaussian_bump(2, rng.uniform(-0.5, 0.5, size=2), 0.5, [0.8, -0.6])
    pts = spec.nodes()
    lb = apply_L_by_coefficients(coeffs, B, pts)
    lsphi = apply_L_adjoint(coeffs, phi, pts)
    lhs = integrate(np.einsum("...a,...a->...", lb, phi.value(pts)), spec.dx, spec.dim)
    rhs = integrate(np.einsum("...a,...a->...", B.value(pts), lsphi), spec.dx, spec.dim)
    return abs(lhs - rhs) / max(abs(lhs), 1e-300)


def random_divfree_grid_fields(spec: GridSpec, count: int, seed: int):
    """Zero-mean band-limited divergence-free samples for coercivity sweeps."""
    rng = np.random.default_rng(seed)
    return [sample(random_trig_field(spec.dim, int(rng.integers(2 ** 31)),
                                     n_modes=5, kmax=4, divergence_free=True), spec)
            for _ in range(count)]


def interpolation_max_ratio(n: int = 64, p: float = 3.0, n_triples: int = 200,
                            seed: int = 3, extent: float = np.pi,
                            include_singular: bool = True) -> float:
    """Max |ratio| over random scalar triples plus the singular-weight case."""
    spec = GridSpec(2, extent, n)
    rng = np.random.default_rng(seed)
    worst = 0.0
    nodes = spec.nodes()
    for i in range(n_triples):
        f = sample(random_scalar_field(2, int(rng.integers(2 ** 31))), spec)
        g = sample(random_scalar_field(2, int(rng.integers(2 ** 31))), spec)
        h = sample(random_scalar_field(2, int(rng.integers(2 ** 31))), spec)
        r = interpolation_ratio(f, g, h, int(rng.integers(2)), p)
        worst = max(worst, abs(r))
    if include_singular:
        r2 = np.sum(nodes ** 2, axis=-1)
        gvals = (np.maximum(r2, (spec.dx / 2) ** 2)) ** (-0.25)
        cutoff = np.exp(-np.maximum(np.sqrt(r2) - extent / 2, 0.0) ** 2 / 0.1)
        g_sing = GridField((gvals * cutoff)[None], extent, name="singular_g")
        for i in range(20):
            f = sample(random_scalar_field(2, int(rng.integers(2 ** 31))), spec)
            h = sample(random_scalar_field(2, int(rng.integers(2 ** 31))), spec)
            r = interpolation_ratio(f, g_sing, h, int(rng.integers(2)), p)
            worst = max(worst, abs(r))
    return worst


def operator_report(basis: NoiseBasis, spec: GridSpec, seed: int = 0) -> dict:
    """The verify-operator JSON payload."""
    coeffs = OperatorCoefficients(basis)
    ell = check_ellipticity(basis, ellipticity_lattice(spec))
    fields = random_divfree_grid_fields(GridSpec(spec.dim, spec.extent, min(spec.n, 64)),
                                        count=20, seed=seed + 1)
    coer = coercivity_check(coeffs, ell.nu_est, fields)
    qpts = ellipticity_lattice(spec, per_axis=16)
    qdiag = 2.0 * coeffs.a(qpts)
    # discrete surrogate of the C_b^2 assumption: sup norms of Q and its
    # first and second derivatives over the sample lattice, recorded only
    from .noise import covariance_derivatives
    q_sups = {f"sup_Q_{which}": float(np.max(np.abs(
        covariance_derivatives(basis, qpts, qpts, which))))
        for which in ("d1", "d2", "d1d1", "d1d2", "d2d2")}
    report = {
        "nu_est": ell.nu_est,
        "ellipticity_pass": bool(ell.pass_),
        "C_est": coer["C_est"],
        "bracket_vs_coeff_max_err": bracket_vs_coeff_max_err(seed=seed),
        "adjoint_duality_err": adjoint_duality_err(basis, n=min(2 * spec.n, 128), seed=seed),
        "interp_max_ratio": interpolation_max_ratio(n=spec.n, seed=seed),
        "sup_Q_diag": float(np.max(np.abs(qdiag))),
        "sum_sigma_sq_bound": basis.sum_sq_bound(qpts),
        **q_sups,
    }
    return report
