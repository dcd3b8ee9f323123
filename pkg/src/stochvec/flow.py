"""Stochastic characteristics on the torus and the representation of solutions.

The particle SDE dX = v(t, X) dt + sum_k sigma_k(X) o dW^k is stepped with the
Stratonovich Heun predictor-corrector; the Jacobian rides along through its
variational equation dJ = Dv J dt + sum_k Dsigma_k J o dW^k. The inverse flow
integrates the time-reversed equation with the same increments in reverse
order and negated signs, certified per node by a forward round-trip. One
solution sample on the grid is then J(y) B_0(y) at y = inverse(x).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import BlowUp, DimensionMismatch, InverseToleranceExceeded
from .fields import AnalyticField, GridField, GridSpec, d1, wrap_coords
from .lie import OperatorCoefficients, apply_L_adjoint
from .noise import NoiseBasis

__all__ = [
    "FlowSample", "SpdeSampleField", "GridInterpolant", "as_velocity",
    "integrate_forward", "integrate_jacobian", "integrate_inverse",
    "solve_spde_sample", "weak_form_residual", "periodic_distance",
    "weak_test_transform",
]

DEFAULT_TOL_INV = 1e-2
DEFAULT_TOL_DET = 1e-3


# ---------------------------------------------------------------------------
# field evaluation at particle positions
# ---------------------------------------------------------------------------

class GridInterpolant:
    """Periodic cubic-spline evaluation of a grid field off the nodes.

    Spline coefficients (values and central-difference derivative grids) are
    prefiltered once; evaluations then skip the filter pass.
    """

    def __init__(self, f: GridField, order: int = 3):
        self.extent = f.extent
        self.dx = f.dx
        self.dim = f.dim
        self.order = order
        self._val_coeffs = [ndimage.spline_filter(f.values[a], order=order, mode="grid-wrap")
                            for a in range(f.ncomp)]
        self._jac_coeffs = [[ndimage.spline_filter(d1(f.values[a], i, f.dx), order=order,
                                                   mode="grid-wrap")
                             for i in range(f.dim)] for a in range(f.ncomp)]

    def _index_coords(self, pts: np.ndarray) -> np.ndarray:
        idx = (pts + self.extent) / self.dx
        return np.moveaxis(idx, -1, 0)

    def _eval(self, coeffs, pts):
        coords = self._index_coords(np.atleast_2d(pts))
        return ndimage.map_coordinates(coeffs, coords, order=self.order,
                                       mode="grid-wrap", prefilter=False)

    def value(self, pts: np.ndarray, t: float = 0.0) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        out = np.stack([self._eval(c, pts) for c in self._val_coeffs], axis=-1)
        return out.reshape(pts.shape[:-1] + (len(self._val_coeffs),))

    def jacobian(self, pts: np.ndarray, t: float = 0.0) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        m = len(self._val_coeffs)
        rows = [np.stack([self._eval(c, pts) for c in row], axis=-1)
                for row in self._jac_coeffs]
        out = np.stack(rows, axis=-2)
        return out.reshape(pts.shape[:-1] + (m, self.dim))


class _ZeroVelocity:
    def __init__(self, dim):
        self.dim = dim

    def value(self, pts, t=0.0):
        return np.zeros(np.asarray(pts).shape)

    def jacobian(self, pts, t=0.0):
        p = np.asarray(pts)
        return np.zeros(p.shape[:-1] + (self.dim, self.dim))


def as_velocity(v, dim: int):
    """Normalize None / AnalyticField / GridField / interpolant to an evaluator."""
    if v is None:
        return _ZeroVelocity(dim)
    if isinstance(v, GridField):
        return GridInterpolant(v)
    return v


# ---------------------------------------------------------------------------
# Heun stepping
# ---------------------------------------------------------------------------

class _BasisEval:
    """Splits a noise basis into constant and space-dependent modes.

    Constant modes contribute a position-independent diffusion increment and
    nothing to the variational equation, which makes the constant-basis case
    nearly free per step.
    """

    def __init__(self, basis: NoiseBasis):
        self.K = basis.K
        self.const_idx, self.var_idx = [], []
        consts = []
        self.varying = []
        for k, s in enumerate(basis.sigmas):
            if getattr(s, "is_constant", False):
                self.const_idx.append(k)
                consts.append(s.value(np.zeros((1, s.dim)))[0])
            else:
                self.var_idx.append(k)
                self.varying.append(s)
        self.const_mat = np.array(consts).T if consts else None    # (d, Kc)

    def diffusion(self, X, dW_row):
        """sum_k sigma_k(X) dW^k; dW_row is (K,) or per-particle (P, K)."""
        per_particle = dW_row.ndim == 2
        out = np.zeros_like(X)
        if self.const_mat is not None:
            dwc = dW_row[..., self.const_idx]
            out += dwc @ self.const_mat.T if per_particle else self.const_mat @ dwc
        if self.varying:
            vals = np.stack([s.value(X) for s in self.varying], axis=-1)
            dwv = dW_row[..., self.var_idx]
            if per_particle:
                out += np.einsum("pdk,pk->pd", vals, dwv)
            else:
                out += vals @ dwv
        return out

    def diffusion_jacobian(self, X, dW_row):
        """sum_k Dsigma_k(X) dW^k, or None when no mode varies in space."""
        if not self.varying:
            return None
        jacs = np.stack([s.jacobian(X) for s in self.varying], axis=-1)
        dwv = dW_row[..., self.var_idx]
        if dW_row.ndim == 2:
            return np.einsum("pabk,pk->pab", jacs, dwv)
        return jacs @ dwv


def _increment(vel, sig: _BasisEval, X, t, dt, dW_row, J):
    """Heun stage increments for positions and (optionally) Jacobians."""
    fx = sig.diffusion(X, dW_row)
    zero_vel = isinstance(vel, _ZeroVelocity)
    if not zero_vel:
        fx = fx + vel.value(X, t) * dt
    fj = None
    if J is not None:
        dj = sig.diffusion_jacobian(X, dW_row)
        if dj is not None:
            fj = np.matmul(dj, J)
        if not zero_vel:
            dv = np.matmul(vel.jacobian(X, t), J) * dt
            fj = dv if fj is None else fj + dv
    return fx, fj


def _heun_step(X, J, vel, sig, t, dt, dW_row, extent):
    fx, fj = _increment(vel, sig, X, t, dt, dW_row, J)
    Xp = wrap_coords(X + fx, extent)
    Jp = J if (J is None or fj is None) else J + fj
    gx, gj = _increment(vel, sig, Xp, t + dt, dt, dW_row, Jp)
    X1 = wrap_coords(X + 0.5 * (fx + gx), extent)
    if J is None:
        J1 = None
    elif fj is None and gj is None:
        J1 = J
    else:
        incr = (fj if fj is not None else 0.0) + (gj if gj is not None else 0.0)
        J1 = J + 0.5 * incr
    return X1, J1


def _check_sane(X, extent):
    if not np.all(np.isfinite(X)) or np.any(np.abs(X) > 2.0 * extent):
        raise BlowUp("particle left the 2L safety shell")


@dataclass
class FlowSample:
    """State of one path's particle cloud: positions, Jacobians, increments."""

    sample_index: int
    positions: np.ndarray               # (P, d)
    jacobians: Optional[np.ndarray]     # (P, d, d) or None
    increments: np.ndarray              # (N, K) reference
    time_index: int = 0

    def det_jacobians(self) -> np.ndarray:
        if self.jacobians is None:
            raise DimensionMismatch("flow sample carries no Jacobians")
        return np.linalg.det(self.jacobians)


def integrate_forward(x0: np.ndarray, v, basis: NoiseBasis, dW: np.ndarray,
                      dt: float, extent: float, t0: float = 0.0,
                      with_jacobian: bool = False, record: bool = False,
                      callback=None):
    """Heun integration of the characteristics from x0 over all increments.

    Returns (X, J) at the final time, or (traj_X, traj_J) with a leading time
    axis of length N+1 when ``record``. ``callback(j, t, X, J)`` fires after
    every accepted step, including once at j=0 before stepping.
    """
    X = wrap_coords(np.atleast_2d(np.asarray(x0, dtype=float)), extent)
    vel = as_velocity(v, X.shape[-1])
    sig = _BasisEval(basis)
    J = np.broadcast_to(np.eye(X.shape[-1]), X.shape + (X.shape[-1],)).copy() \
        if with_jacobian else None
    n_steps = dW.shape[0]
    traj_x = [X.copy()] if record else None
    traj_j = [J.copy()] if (record and with_jacobian) else None
    if callback is not None:
        callback(0, t0, X, J)
    t = t0
    for j in range(n_steps):
        X, J = _heun_step(X, J, vel, sig, t, dt, dW[j], extent)
        t += dt
        _check_sane(X, extent)
        if record:
            traj_x.append(X.copy())
            if with_jacobian:
                traj_j.append(J.copy())
        if callback is not None:
            callback(j + 1, t, X, J)
    if record:
        return np.array(traj_x), (np.array(traj_j) if with_jacobian else None)
    return X, J


def integrate_jacobian(x0: np.ndarray, v, basis: NoiseBasis, dW: np.ndarray,
                       dt: float, extent: float, t0: float = 0.0):
    """Positions and Jacobians at the final time; J(0) = Identity."""
    return integrate_forward(x0, v, basis, dW, dt, extent, t0=t0, with_jacobian=True)


def integrate_inverse(x: np.ndarray, v, basis: NoiseBasis, dW: np.ndarray,
                      dt: float, extent: float) -> np.ndarray:
    """Time-reversed integration: same increments in reverse, negated signs."""
    Y = wrap_coords(np.atleast_2d(np.asarray(x, dtype=float)), extent)
    vel = as_velocity(v, Y.shape[-1])
    neg = vel if isinstance(vel, _ZeroVelocity) else _NegatedVelocity(vel)
    sig = _BasisEval(NoiseBasis(tuple(_negate_field(s) for s in basis.sigmas)))
    n_steps = dW.shape[0]
    for j in range(n_steps - 1, -1, -1):
        Y, _ = _heun_step(Y, None, neg, sig, j * dt, dt, dW[j], extent)
        _check_sane(Y, extent)
    return Y


class _NegatedVelocity:
    def __init__(self, vel):
        self._vel = vel

    def value(self, pts, t=0.0):
        return -self._vel.value(pts, t)

    def jacobian(self, pts, t=0.0):
        return -self._vel.jacobian(pts, t)


def _negate_field(f: AnalyticField) -> AnalyticField:
    jac = (lambda pts, t: -f.jacobian(pts, t)) if f.has_jacobian else None
    hess = (lambda pts, t: -f.hessian(pts, t)) if f.has_hessian else None
    return AnalyticField(f.dim, lambda pts, t: -f.value(pts, t), jac, hess,
                         ncomp=f.ncomp, name=f"-{f.name}", is_constant=f.is_constant)


def periodic_distance(a: np.ndarray, b: np.ndarray, extent: float) -> np.ndarray:
    """Max-norm distance on the torus, per point."""
    diff = wrap_coords(a - b, extent)
    return np.max(np.abs(diff), axis=-1)


# ---------------------------------------------------------------------------
# representation formula
# ---------------------------------------------------------------------------

@dataclass
class SpdeSampleField:
    """One path's solution field B(t, .) with its stochastic exponential."""

    field: GridField
    path_index: int
    t: float
    exponential: float = 1.0
    diagnostics: dict = dc_field(default_factory=dict)


class _RepeatedIncrements:
    """Per-step view expanding a (C, N, K) chunk to per-particle rows."""

    def __init__(self, chunk: np.ndarray, nodes_per_path: int):
        self._chunk = chunk
        self._p = nodes_per_path
        self.shape = (chunk.shape[1], chunk.shape[0] * nodes_per_path, chunk.shape[2])

    def __getitem__(self, j: int) -> np.ndarray:
        return np.repeat(self._chunk[:, j, :], self._p, axis=0)


def solve_spde_chunk(B0, v, basis: NoiseBasis, dW_chunk: np.ndarray, dt: float,
                     spec: GridSpec, tol_inv: float = DEFAULT_TOL_INV,
                     reject_fraction: float = 1e-3):
    """Representation-formula fields for a chunk of paths at once.

    ``dW_chunk`` has shape (C, N, K); all C paths move the same node cloud, so
    one big vectorized integration serves the whole chunk. Returns nodal
    values of shape (C, d, n, ..., n) and one diagnostics dict per path.
    """
    C, _, _ = dW_chunk.shape
    nodes = spec.nodes().reshape(-1, spec.dim)
    P = nodes.shape[0]
    tiled = np.tile(nodes, (C, 1))
    rep = _RepeatedIncrements(dW_chunk, P)
    y = integrate_inverse(tiled, v, basis, rep, dt, spec.extent)
    x_back, J = integrate_forward(y, v, basis, rep, dt, spec.extent, with_jacobian=True)
    residual = periodic_distance(x_back, tiled, spec.extent).reshape(C, P)
    flagged = residual > tol_inv
    bad = flagged.sum(axis=1)
    if np.any(bad > reject_fraction * P):
        worst = int(np.argmax(bad))
        raise InverseToleranceExceeded(float(residual[worst].max()), tol_inv)

    b0 = _as_initial_evaluator(B0)
    vals = np.einsum("pab,pb->pa", J, b0.value(y)).reshape(C, P, spec.dim)
    grid_vals = np.moveaxis(vals.reshape((C,) + (spec.n,) * spec.dim + (spec.dim,)), -1, 1)
    det = np.linalg.det(J).reshape(C, P)
    # Frobenius norm: cheap upper bound for the operator norm of each J
    jnorm = np.sqrt(np.sum(J.reshape(C, P, -1) ** 2, axis=-1)).max(axis=1)
    diags = [{
        "max_roundtrip_residual": float(residual[c].max()),
        "flagged_nodes": int(flagged[c].sum()),
        "max_abs_det_minus_one": float(np.abs(det[c] - 1.0).max()),
        "max_jacobian_norm": float(jnorm[c]),
    } for c in range(C)]
    return grid_vals, diags


def solve_spde_sample(B0, v, basis: NoiseBasis, dW: np.ndarray, dt: float,
                      spec: GridSpec, path_index: int = 0,
                      tol_inv: float = DEFAULT_TOL_INV,
                      reject_fraction: float = 1e-3) -> SpdeSampleField:
    """Realize B(t, x) = J(y) B_0(y), y = inverse flow of the grid node x.

    The inverse is certified by forward re-integration: nodes whose round trip
    misses by more than ``tol_inv`` are flagged, and the whole field is
    rejected when more than ``reject_fraction`` of nodes fail.
    """
    grid_vals, diags = solve_spde_chunk(B0, v, basis, dW[None], dt, spec,
                                        tol_inv=tol_inv, reject_fraction=reject_fraction)
    field = GridField(grid_vals[0], spec.extent, t=dW.shape[0] * dt, name="B_sample")
    return SpdeSampleField(field, path_index, dW.shape[0] * dt, diagnostics=diags[0])


def _as_initial_evaluator(B0):
    if isinstance(B0, GridField):
        return GridInterpolant(B0)
    return B0


# ---------------------------------------------------------------------------
# weak-form residual
# ---------------------------------------------------------------------------

def weak_test_transform(sigma, chi: AnalyticField) -> AnalyticField:
    """The weak-form kernel map: (A chi)^i = sum_a sigma^a (d_a chi^i - d_i chi^a).

    Pairing <B, A chi> equals the weak advection functional of B against chi
    for divergence-free sigma and B.
    """
    def val(pts, t):
        dchi = chi.jacobian(pts, t)
        sv = sigma.value(pts, t)
        return np.einsum("...a,...ia->...i", sv, dchi) - np.einsum("...a,...ai->...i", sv, dchi)

    jac = None
    if chi.has_hessian and getattr(sigma, "has_jacobian", True):
        def jac(pts, t):
            dchi = chi.jacobian(pts, t)
            hchi = chi.hessian(pts, t)
            sv = sigma.value(pts, t)
            sj = sigma.jacobian(pts, t)
            out = np.einsum("...aj,...ia->...ij", sj, dchi)
            out -= np.einsum("...aj,...ai->...ij", sj, dchi)
            out += np.einsum("...a,...iaj->...ij", sv, hchi)
            out -= np.einsum("...a,...aij->...ij", sv, hchi)
            return out

    return AnalyticField(chi.dim, val, jac, None, name=f"A[{chi.name}]")


def weak_form_residual(B0, v, basis: NoiseBasis, dW: np.ndarray, dt: float,
                       spec: GridSpec, phi: AnalyticField,
                       coeffs: OperatorCoefficients):
    """Defect of the Ito weak identity along one simulated path.

    All spatial pairings <B(s), chi> are computed by transporting grid-node
    particles forward (change of variables through the flow); time integrals
    use the trapezoid rule and the stochastic integrals use value-averaged
    sums plus the explicit Ito-Stratonovich quadratic-variation correction, so
    the defect of the exact identity decays at first order in dt.

    Returns (times, residuals) with residuals[0] = 0.
    """
    vel = as_velocity(v, spec.dim)
    b0 = _as_initial_evaluator(B0)

    test_fields = {"phi": phi}
    if not isinstance(vel, _ZeroVelocity):
        test_fields["adv"] = weak_test_transform(vel, phi)
    for k, s in enumerate(basis.sigmas):
        ak = weak_test_transform(s, phi)
        test_fields[f"noise{k}"] = ak
        test_fields[f"qv{k}"] = weak_test_transform(s, ak)

    lstar = AnalyticField(spec.dim, lambda pts, t: apply_L_adjoint(coeffs, phi, pts, t),
                          name="Lstar_phi")
    test_fields["lstar"] = lstar

    nodes = spec.nodes().reshape(-1, spec.dim)
    w0 = b0.value(nodes)
    w_quad = spec.dx ** spec.dim
    n_steps = dW.shape[0]
    series = {name: np.empty(n_steps + 1) for name in test_fields}

    def accumulate(j, t, X, J):
        det = np.linalg.det(J)
        carried = np.einsum("pab,pb->pa", J, w0)
        for name, chi in test_fields.items():
            vals = chi.value(X, t)
            series[name][j] = w_quad * float(np.sum(det * np.einsum("pa,pa->p", carried, vals)))

    integrate_forward(nodes, v, basis, dW, dt, spec.extent, with_jacobian=True,
                      callback=accumulate)

    times = np.arange(n_steps + 1) * dt

    def trap(arr):
        out = np.zeros(n_steps + 1)
        out[1:] = np.cumsum(0.5 * (arr[:-1] + arr[1:]) * dt)
        return out

    drift = trap(series["adv"]) if "adv" in series else 0.0
    lstar_term = trap(series["lstar"])
    stoch = np.zeros(n_steps + 1)
    for k in range(basis.K):
        fk = series[f"noise{k}"]
        inc = 0.5 * (fk[:-1] + fk[1:]) * dW[:, k]
        s = np.zeros(n_steps + 1)
        s[1:] = np.cumsum(inc)
        stoch += s - 0.5 * trap(series[f"qv{k}"])

    residual = series["phi"] - series["phi"][0] - drift - stoch - lstar_term
    return times, residual
