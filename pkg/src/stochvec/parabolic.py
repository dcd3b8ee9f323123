"""Deterministic parabolic solvers for the expectation laws of the SPDE.

Two systems share the explicit RK2 stepper and CFL guard: the vector equation
for V(t, x) = E[B e_f],

    dV/dt = L V - [v + h, V],        h(t, x) = sum_k f_k(t) sigma_k(x),

and the coupled symmetric system for the second moments u_ab = E[B^a B^b],

    du_ab/dt + (v.grad) u_ab - sum_i u_bi d_i v^a - sum_i u_ai d_i v^b
        = (1/2) sum_ij Q^ij(x,x) d_i d_j u_ab + M^ab(u),

with M assembled from first-derivative products of the basis fields. The
correction-term signs follow the re-derived Ito expansion (the zeroth-order
coefficient used in M is ``zeta``, not the displayed ``eta``); the assembly is
pinned by an algebraic identity test against the nested-bracket operator and
by the Monte-Carlo moment oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .errors import StepRejected
from .fields import GridField, GridSpec, d1, d2, sample
from .lie import GridOperator, OperatorCoefficients
from .noise import NoiseBasis

__all__ = [
    "ParabolicState", "MomentCoefficients", "AdvectionData",
    "step_V", "run_V", "step_moments", "run_moments",
    "energy_diagnostics", "bilinear_form", "cfl_dt",
    "sym_index_pairs", "pack_sym", "unpack_sym",
]

MAX_HALVINGS = 8


# ---------------------------------------------------------------------------
# advection data w = v + h(t)
# ---------------------------------------------------------------------------

class AdvectionData:
    """Grids of w = v + h(t) and its central-difference jacobian.

    h is piecewise constant in t whenever f is, so grids are cached per
    coefficient slice.
    """

    def __init__(self, spec: GridSpec, v=None, basis: Optional[NoiseBasis] = None,
                 f: Optional[Callable[[float], np.ndarray]] = None):
        self.spec = spec
        self.dx = spec.dx
        if v is None:
            self._v_vals = np.zeros((spec.dim,) + (spec.n,) * spec.dim)
        elif isinstance(v, GridField):
            self._v_vals = np.array(v.values)
        else:
            self._v_vals = np.array(sample(v, spec).values)
        self._sigma_vals = None
        if basis is not None and f is not None:
            self._sigma_vals = [np.array(sample(s, spec).values) for s in basis.sigmas]
        self._f = f
        self._cache_key = None
        self._cache = None

    def at(self, t: float):
        """w and Dw grids at time t; Dw[a, i] = d_i w^a."""
        fvals = None
        if self._f is not None:
            fvals = np.asarray(self._f(t), dtype=float)
        key = None if fvals is None else tuple(fvals)
        if self._cache is not None and key == self._cache_key:
            return self._cache
        w = self._v_vals.copy()
        if fvals is not None and self._sigma_vals:
            for fk, sg in zip(fvals, self._sigma_vals):
                if fk:
                    w += fk * sg
        d = w.shape[0]
        dw = np.empty((d, d) + w.shape[1:])
        for a in range(d):
            for i in range(d):
                dw[a, i] = d1(w[a], i, self.dx)
        self._cache_key, self._cache = key, (w, dw)
        return self._cache

    def max_speed(self, t: float = 0.0) -> float:
        w, _ = self.at(t)
        return float(np.max(np.abs(w)))


def _advect(w, dw, V, dx):
    """[w, V] = (w.grad) V - (V.grad) w on nodal arrays."""
    d = V.shape[0]
    out = np.empty_like(V)
    for a in range(d):
        acc = np.zeros_like(V[a])
        for i in range(d):
            acc += w[i] * d1(V[a], i, dx)
            acc -= V[i] * dw[a, i]
        out[a] = acc
    return out


def cfl_dt(spec: GridSpec, op: GridOperator, max_speed: float, safety: float = 0.9) -> float:
    """Explicit-step bound min(dx^2 / (2 d max||a||), dx / max|w|) * safety."""
    row_sum = np.abs(op.a).sum(axis=1).max()
    dt = spec.dx ** 2 / (2.0 * spec.dim * max(row_sum, 1e-300))
    if max_speed > 0:
        dt = min(dt, spec.dx / max_speed)
    return safety * dt


# ---------------------------------------------------------------------------
# states and the shared stepper
# ---------------------------------------------------------------------------

@dataclass
class ParabolicState:
    """Explicitly stepped field with a per-step norm diagnostics ring."""

    field: GridField
    t: float
    dt: float
    history: list = dc_field(default_factory=list)   # (t, l2_sq, h1_sq)
    halvings: int = 0

    def record(self):
        v = self.field
        l2_sq = float(np.sum(v.values ** 2)) * v.dx ** v.dim
        h1_sq = 0.0
        for a in range(v.ncomp):
            for i in range(v.dim):
                h1_sq += float(np.sum(d1(v.values[a], i, v.dx) ** 2)) * v.dx ** v.dim
        self.history.append((self.t, l2_sq, h1_sq))


def _rk2(values: np.ndarray, t: float, dt: float, rhs) -> np.ndarray:
    k1 = rhs(t, values)
    k2 = rhs(t + dt, values + dt * k1)
    return values + 0.5 * dt * (k1 + k2)


def _step_with_halving(state: ParabolicState, rhs) -> None:
    """One accepted RK2 step; halves dt (up to MAX_HALVINGS) on nonfinite output."""
    for _ in range(MAX_HALVINGS + 1):
        new_vals = _rk2(state.field.values, state.t, state.dt, rhs)
        if np.all(np.isfinite(new_vals)):
            state.field = state.field.with_values(new_vals)
            state.t += state.dt
            state.record()
            return
        state.dt *= 0.5
        state.halvings += 1
    raise StepRejected(f"nonfinite state after {MAX_HALVINGS} halvings at t={state.t:g}")


# ---------------------------------------------------------------------------
# expectation equation
# ---------------------------------------------------------------------------

def step_V(state: ParabolicState, op: GridOperator, adv: AdvectionData) -> ParabolicState:
    """One explicit RK2 step of V' = L V - [v + h, V]."""
    dx = adv.dx

    def rhs(t, vals):
        w, dw = adv.at(t)
        return op.apply(vals) - _advect(w, dw, vals, dx)

    _step_with_halving(state, rhs)
    return state


def run_V(V0: GridField, coeffs: OperatorCoefficients, adv: AdvectionData,
          t_final: float, dt: Optional[float] = None,
          callback=None) -> ParabolicState:
    """Step V from 0 to t_final, landing exactly on t_final."""
    spec = V0.spec
    op = GridOperator.sample(coeffs, spec)
    if dt is None:
        dt = cfl_dt(spec, op, adv.max_speed(0.0))
    state = ParabolicState(V0, 0.0, dt)
    state.record()
    if callback is not None:
        callback(state)
    while state.t < t_final - 1e-12:
        state.dt = min(state.dt, t_final - state.t)
        step_V(state, op, adv)
        if callback is not None:
            callback(state)
    return state


# ---------------------------------------------------------------------------
# second-moment system
# ---------------------------------------------------------------------------

def sym_index_pairs(d: int):
    return [(a, b) for a in range(d) for b in range(a, d)]


def pack_sym(full: np.ndarray, d: int) -> np.ndarray:
    return np.stack([full[a, b] for a, b in sym_index_pairs(d)])


def unpack_sym(packed: np.ndarray, d: int) -> np.ndarray:
    grid_shape = packed.shape[1:]
    full = np.empty((d, d) + grid_shape)
    for idx, (a, b) in enumerate(sym_index_pairs(d)):
        full[a, b] = packed[idx]
        full[b, a] = packed[idx]
    return full


@dataclass(frozen=True)
class MomentCoefficients:
    """Correction-coefficient fields of the second-moment system.

    theta^j = -(1/2) sum_k (s_k . grad) s_k^j
    theta_i^a (vector, component j) = -sum_k s_k^j d_i s_k^a
    eta_i^a = (1/2) sum_k (s_k . grad) d_i s_k^a
              + (1/2) sum_k sum_j d_i s_k^j d_j s_k^a
    eta_cross (i,j;a,b) = sum_k d_j s_k^b d_i s_k^a

    ``zeta`` is the zeroth-order coefficient actually entering M (eta with the
    second-derivative piece negated); see the module docstring.
    """

    basis: NoiseBasis

    def theta(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        out = np.zeros(pts.shape[:-1] + (self.basis.dim,))
        for s in self.basis.sigmas:
            out -= 0.5 * np.einsum("...g,...jg->...j", s.value(pts), s.jacobian(pts))
        return out

    def theta_i(self, pts: np.ndarray) -> np.ndarray:
        """(..., i, a, j) with j the vector component."""
        pts = np.asarray(pts, dtype=float)
        d = self.basis.dim
        out = np.zeros(pts.shape[:-1] + (d, d, d))
        for s in self.basis.sigmas:
            out -= np.einsum("...j,...ai->...iaj", s.value(pts), s.jacobian(pts))
        return out

    def eta(self, pts: np.ndarray) -> np.ndarray:
        """(..., i, a); the displayed coefficient, kept for its FD invariant."""
        return self._zero_order(pts, first_sign=+0.5)

    def zeta(self, pts: np.ndarray) -> np.ndarray:
        """(..., i, a); the coefficient entering the assembled M."""
        return self._zero_order(pts, first_sign=-0.5)

    def _zero_order(self, pts, first_sign):
        pts = np.asarray(pts, dtype=float)
        d = self.basis.dim
        out = np.zeros(pts.shape[:-1] + (d, d))
        for s in self.basis.sigmas:
            ds = s.jacobian(pts)
            hs = s.hessian(pts)
            out += first_sign * np.einsum("...g,...aig->...ia", s.value(pts), hs)
            out += 0.5 * np.einsum("...ji,...aj->...ia", ds, ds)
        return out

    def eta_cross(self, pts: np.ndarray) -> np.ndarray:
        """(..., i, j, a, b)."""
        pts = np.asarray(pts, dtype=float)
        d = self.basis.dim
        out = np.zeros(pts.shape[:-1] + (d, d, d, d))
        for s in self.basis.sigmas:
            ds = s.jacobian(pts)
            out += np.einsum("...bj,...ai->...ijab", ds, ds)
        return out


class MomentOperator:
    """Grid realization of the moment system's right-hand side."""

    def __init__(self, spec: GridSpec, basis: NoiseBasis, coeffs: OperatorCoefficients,
                 v=None):
        self.spec = spec
        self.dx = spec.dx
        self.d = spec.dim
        pts = spec.nodes()
        mc = MomentCoefficients(basis)
        move = lambda arr, k: np.moveaxis(arr, tuple(range(-k, 0)), tuple(range(k)))
        self.qdiag = 2.0 * move(coeffs.a(pts), 2)                # (i, j, grid)
        self.theta = move(mc.theta(pts), 1)                      # (j, grid)
        self.theta_i = move(mc.theta_i(pts), 3)                  # (i, a, j, grid)
        self.zeta = move(mc.zeta(pts), 2)                        # (i, a, grid)
        self.eta_cross = move(mc.eta_cross(pts), 4)              # (i, j, a, b, grid)
        adv = AdvectionData(spec, v=v)
        self.v_vals, self.v_jac = adv.at(0.0)

    def rhs(self, packed: np.ndarray) -> np.ndarray:
        d, dx = self.d, self.dx
        u = unpack_sym(packed, d)
        du = np.empty((d, d, d) + u.shape[2:])        # (a, b, j, grid)
        for a in range(d):
            for b in range(d):
                for j in range(d):
                    du[a, b, j] = d1(u[a, b], j, dx)
        out = []
        for a, b in sym_index_pairs(d):
            acc = np.zeros_like(u[a, b])
            for i in range(d):
                for j in range(i, d):
                    w = 1.0 if i == j else 2.0
                    acc += 0.5 * w * self.qdiag[i, j] * d2(u[a, b], i, j, dx)
            for j in range(d):
                acc -= (self.v_vals[j] + self.theta[j]) * du[a, b, j]
            for i in range(d):
                acc += u[b, i] * self.v_jac[a, i] + u[a, i] * self.v_jac[b, i]
                acc += self.zeta[i, a] * u[b, i] + self.zeta[i, b] * u[a, i]
                for j in range(d):
                    acc += self.theta_i[i, a, j] * du[b, i, j]
                    acc += self.theta_i[i, b, j] * du[a, i, j]
                    acc += self.eta_cross[i, j, a, b] * u[i, j]
            out.append(acc)
        return np.stack(out)

    def max_speed(self) -> float:
        return float(np.max(np.abs(self.v_vals + self.theta)))

    def cfl_dt(self, safety: float = 0.9) -> float:
        row_sum = 0.5 * np.abs(self.qdiag).sum(axis=1).max()
        dt = self.dx ** 2 / (2.0 * self.d * max(row_sum, 1e-300))
        speed = self.max_speed()
        if speed > 0:
            dt = min(dt, self.dx / speed)
        return safety * dt


def step_moments(state: ParabolicState, op: MomentOperator) -> ParabolicState:
    """One explicit RK2 step of the packed symmetric moment system."""
    _step_with_halving(state, lambda t, vals: op.rhs(vals))
    return state


def run_moments(U0: GridField, basis: NoiseBasis, coeffs: OperatorCoefficients,
                t_final: float, v=None, dt: Optional[float] = None,
                callback=None) -> ParabolicState:
    """Step the packed moment field (d(d+1)/2 components) to t_final."""
    op = MomentOperator(U0.spec, basis, coeffs, v=v)
    if dt is None:
        dt = op.cfl_dt()
    state = ParabolicState(U0, 0.0, dt)
    state.record()
    if callback is not None:
        callback(state)
    while state.t < t_final - 1e-12:
        state.dt = min(state.dt, t_final - state.t)
        step_moments(state, op)
        if callback is not None:
            callback(state)
    return state


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def energy_diagnostics(history) -> dict:
    """sup_t ||V||_2^2 and the trapezoid of ||V||_{W^{1,2}}^2 over the run."""
    if not history:
        raise StepRejected("energy diagnostics on empty history")
    ts = np.array([h[0] for h in history])
    l2 = np.array([h[1] for h in history])
    w12 = l2 + np.array([h[2] for h in history])
    return {
        "sup_l2_sq": float(l2.max()),
        "int_w12_sq": float(np.trapezoid(w12, ts)) if len(ts) > 1 else 0.0,
    }


def bilinear_form(f: GridField, g: GridField, coeffs: OperatorCoefficients,
                  adv: AdvectionData, t: float = 0.0) -> float:
    """Box quadrature of the variational form a(t, f, g).

    Six integrals: the gradient term against a_ij, the d_i a_ij term, the b
    and c zero/first-order terms (with minus signs), and the two advection
    terms carrying v + h after one integration by parts.
    """
    spec = f.spec
    pts = spec.nodes()
    d, dx = spec.dim, spec.dx
    move = lambda arr, k: np.moveaxis(arr, tuple(range(-k, 0)), tuple(range(k)))
    a = move(coeffs.a(pts), 2)
    da = move(coeffs.da(pts), 3)                 # (i, j, k, grid)
    b = move(coeffs.b(pts), 3)                   # (a, b, i, grid)
    c = move(coeffs.c(pts), 2)
    w, _ = adv.at(t)

    fv, gv = f.values, g.values
    dfv = np.empty((d, d) + fv.shape[1:])
    dgv = np.empty((d, d) + fv.shape[1:])
    for al in range(d):
        for i in range(d):
            dfv[al, i] = d1(fv[al], i, dx)
            dgv[al, i] = d1(gv[al], i, dx)

    total = np.zeros(fv.shape[1:])
    for al in range(d):
        for i in range(d):
            for j in range(d):
                total += a[i, j] * dfv[al, j] * dgv[al, i]
                total += gv[al] * dfv[al, j] * da[i, j, i]
    for al in range(d):
        for be in range(d):
            for i in range(d):
                total -= b[al, be, i] * dfv[be, i] * gv[al]
            total -= c[al, be] * fv[be] * gv[al]
    for al in range(d):
        for be in range(d):
            total += w[al] * dfv[be, al] * gv[be]
            total += w[be] * d1(fv[al] * gv[be], al, dx)
    return float(np.sum(total)) * dx ** d
