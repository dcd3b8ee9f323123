"""Lie brackets and the second-order operator generated by the noise.

The operator acting on a smooth vector field B is half the sum over modes of
the nested bracket [sigma_k, [sigma_k, B]]. Its equivalent coefficient form

    (L B)^a = sum_ij a_ij d_i d_j B^a + sum_{i,b} b_i^{ab} d_i B^b
              + sum_b c^{ab} B^b

is assembled from the covariance diagonal and its derivatives; the nested
bracket serves as the independent oracle for the coefficient path. The formal
adjoint contracts the transposed lower-order coefficients,

    (L* phi)^a = sum_ij d_i d_j (a_ij phi^a) - sum_{i,b} d_i (b_i^{ba} phi^b)
                 + sum_b c^{ba} phi^b,

which is the version satisfying <L B, phi> = <B, L* phi> under box quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSample, DimensionMismatch
from .fields import (AnalyticField, GridField, d1, d2, gradient, h1_seminorm,
                     integrate, l2_norm, lp_norm, w12_norm)
from .noise import NoiseBasis

__all__ = [
    "OperatorCoefficients", "GridOperator",
    "lie_bracket", "lie_bracket_grid", "apply_L_by_brackets",
    "assemble_coefficients", "apply_L_by_coefficients", "apply_L_adjoint",
    "coercivity_check", "interpolation_ratio",
]


# ---------------------------------------------------------------------------
# brackets
# ---------------------------------------------------------------------------

def lie_bracket(A: AnalyticField, B: AnalyticField) -> AnalyticField:
    """[A, B] = A . grad B - B . grad A as an analytic field.

    The bracket's own jacobian (needed for nesting) requires hessians of both
    arguments and is attached only when available.
    """
    if A.dim != B.dim or A.m != B.m or A.m != A.dim:
        raise DimensionMismatch("bracket needs two d-component fields in the same dimension")

    def val(pts, t):
        return (np.einsum("...i,...ai->...a", A.value(pts, t), B.jacobian(pts, t))
                - np.einsum("...i,...ai->...a", B.value(pts, t), A.jacobian(pts, t)))

    jac = None
    if A.has_hessian and B.has_hessian:
        def jac(pts, t):
            av, bv = A.value(pts, t), B.value(pts, t)
            aj, bj = A.jacobian(pts, t), B.jacobian(pts, t)
            ah, bh = A.hessian(pts, t), B.hessian(pts, t)
            out = np.einsum("...ji,...aj->...ai", aj, bj)
            out += np.einsum("...j,...aji->...ai", av, bh)
            out -= np.einsum("...ji,...aj->...ai", bj, aj)
            out -= np.einsum("...j,...aji->...ai", bv, ah)
            return out

    return AnalyticField(A.dim, val, jac, None, name=f"[{A.name},{B.name}]")


def lie_bracket_grid(A: GridField, B: GridField) -> GridField:
    """Bracket of two grid fields with central periodic differences."""
    if A.values.shape != B.values.shape or A.extent != B.extent:
        raise DimensionMismatch("bracket needs fields on the same grid")
    if A.ncomp != A.dim:
        raise DimensionMismatch("bracket needs d-component fields")
    ga, gb = gradient(A), gradient(B)
    out = np.einsum("i...,ai...->a...", A.values, gb) - np.einsum("i...,ai...->a...", B.values, ga)
    return A.with_values(out, name="bracket")


def apply_L_by_brackets(basis: NoiseBasis, B: AnalyticField, pts: np.ndarray,
                        t: float = 0.0) -> np.ndarray:
    """Direct nested-bracket sum (1/2) sum_k [s_k, [s_k, B]](pts)."""
    pts = np.asarray(pts, dtype=float)
    out = np.zeros(pts.shape[:-1] + (B.dim,))
    for s in basis.sigmas:
        out += lie_bracket(s, lie_bracket(s, B)).value(pts, t)
    return 0.5 * out


# ---------------------------------------------------------------------------
# coefficient form
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OperatorCoefficients:
    """Evaluators for a_ij, b_i^{ab}, c^{ab} and the derivatives the adjoint needs.

    Index layout on point batches: a(pts) -> (..., i, j); b(pts) -> (..., a, b, i);
    c(pts) -> (..., a, b); da -> (..., i, j, k) = d_k a_ij;
    dda -> (..., i, j, k, l); db -> (..., a, b, i, k) = d_k b_i^{ab}.
    """

    basis: NoiseBasis

    @property
    def dim(self) -> int:
        return self.basis.dim

    def _parts(self, pts, order):
        vals = [s.value(pts) for s in self.basis.sigmas]
        jacs = [s.jacobian(pts) for s in self.basis.sigmas] if order >= 1 else None
        hess = [s.hessian(pts) for s in self.basis.sigmas] if order >= 2 else None
        return vals, jacs, hess

    def a(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        vals, _, _ = self._parts(pts, 0)
        out = np.zeros(pts.shape[:-1] + (self.dim, self.dim))
        for s in vals:
            out += 0.5 * np.einsum("...i,...j->...ij", s, s)
        return out

    def b(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        d = self.dim
        vals, jacs, _ = self._parts(pts, 1)
        out = np.zeros(pts.shape[:-1] + (d, d, d))
        eye = np.eye(d)
        for s, ds in zip(vals, jacs):
            sgs = np.einsum("...g,...ig->...i", s, ds)        # (s.grad) s^i
            out += 0.5 * np.einsum("ab,...i->...abi", eye, sgs)
            out -= np.einsum("...i,...ab->...abi", s, ds)
        return out

    def c(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        d = self.dim
        vals, jacs, hess = self._parts(pts, 2)
        out = np.zeros(pts.shape[:-1] + (d, d))
        for s, ds, hs in zip(vals, jacs, hess):
            out += 0.5 * np.einsum("...gb,...ag->...ab", ds, ds)
            out -= 0.5 * np.einsum("...g,...agb->...ab", s, hs)
        return out

    def da(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        d = self.dim
        vals, jacs, _ = self._parts(pts, 1)
        out = np.zeros(pts.shape[:-1] + (d, d, d))
        for s, ds in zip(vals, jacs):
            out += 0.5 * (np.einsum("...ik,...j->...ijk", ds, s)
                          + np.einsum("...i,...jk->...ijk", s, ds))
        return out

    def dda(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        d = self.dim
        vals, jacs, hess = self._parts(pts, 2)
        out = np.zeros(pts.shape[:-1] + (d, d, d, d))
        for s, ds, hs in zip(vals, jacs, hess):
            out += 0.5 * (np.einsum("...ikl,...j->...ijkl", hs, s)
                          + np.einsum("...ik,...jl->...ijkl", ds, ds)
                          + np.einsum("...il,...jk->...ijkl", ds, ds)
                          + np.einsum("...i,...jkl->...ijkl", s, hs))
        return out

    def db(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        d = self.dim
        vals, jacs, hess = self._parts(pts, 2)
        out = np.zeros(pts.shape[:-1] + (d, d, d, d))
        eye = np.eye(d)
        for s, ds, hs in zip(vals, jacs, hess):
            dsgs = (np.einsum("...gk,...ig->...ik", ds, ds)
                    + np.einsum("...g,...igk->...ik", s, hs))   # d_k[(s.grad)s^i]
            out += 0.5 * np.einsum("ab,...ik->...abik", eye, dsgs)
            out -= (np.einsum("...ik,...ab->...abik", ds, ds)
                    + np.einsum("...i,...abk->...abik", s, hs))
        return out


def assemble_coefficients(basis: NoiseBasis) -> OperatorCoefficients:
    return OperatorCoefficients(basis)


def apply_L_by_coefficients(coeffs: OperatorCoefficients, B: AnalyticField,
                            pts: np.ndarray, t: float = 0.0) -> np.ndarray:
    """Pointwise second-order form of the operator on an analytic field."""
    pts = np.asarray(pts, dtype=float)
    out = np.einsum("...ij,...aij->...a", coeffs.a(pts), B.hessian(pts, t))
    out += np.einsum("...abi,...bi->...a", coeffs.b(pts), B.jacobian(pts, t))
    out += np.einsum("...ab,...b->...a", coeffs.c(pts), B.value(pts, t))
    return out


def apply_L_adjoint(coeffs: OperatorCoefficients, phi: AnalyticField,
                    pts: np.ndarray, t: float = 0.0) -> np.ndarray:
    """Formal adjoint, transposed lower-order contractions (see module doc)."""
    pts = np.asarray(pts, dtype=float)
    p = phi.value(pts, t)
    dp = phi.jacobian(pts, t)
    hp = phi.hessian(pts, t)
    a, da, dda = coeffs.a(pts), coeffs.da(pts), coeffs.dda(pts)
    b, db = coeffs.b(pts), coeffs.db(pts)
    c = coeffs.c(pts)

    out = np.einsum("...ijij,...a->...a", dda, p)
    out += np.einsum("...iji,...aj->...a", da, dp)
    out += np.einsum("...ijj,...ai->...a", da, dp)
    out += np.einsum("...ij,...aij->...a", a, hp)
    out -= np.einsum("...baii,...b->...a", db, p)
    out -= np.einsum("...bai,...bi->...a", b, dp)
    out += np.einsum("...ba,...b->...a", c, p)
    return out


# ---------------------------------------------------------------------------
# grid realization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridOperator:
    """Coefficients sampled on a grid; applies the operator with FD stencils."""

    a: np.ndarray        # (d, d, n, ..., n)
    b: np.ndarray        # (a, b, i, n, ..., n)
    c: np.ndarray        # (a, b, n, ..., n)
    dx: float

    @classmethod
    def sample(cls, coeffs: OperatorCoefficients, spec) -> "GridOperator":
        pts = spec.nodes()
        d = spec.dim
        a = np.moveaxis(coeffs.a(pts), (-2, -1), (0, 1))
        b = np.moveaxis(coeffs.b(pts), (-3, -2, -1), (0, 1, 2))
        c = np.moveaxis(coeffs.c(pts), (-2, -1), (0, 1))
        return cls(a, b, c, spec.dx)

    def apply(self, V: np.ndarray) -> np.ndarray:
        """L V for a nodal array V of shape (d, n, ..., n)."""
        d = V.shape[0]
        out = np.zeros_like(V)
        for al in range(d):
            for i in range(d):
                for j in range(i, d):
                    w = 1.0 if i == j else 2.0     # a is symmetric
                    out[al] += w * self.a[i, j] * d2(V[al], i, j, self.dx)
            for be in range(d):
                for i in range(d):
                    out[al] += self.b[al, be, i] * d1(V[be], i, self.dx)
                out[al] += self.c[al, be] * V[be]
        return out


def apply_L_grid(coeffs: OperatorCoefficients, B: GridField) -> GridField:
    op = GridOperator.sample(coeffs, B.spec)
    return B.with_values(op.apply(B.values), name="L(B)")


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def coercivity_check(coeffs: OperatorCoefficients, nu: float, fields) -> dict:
    """Smallest constant C with -<LB, B> >= (nu/2)||DB||^2 - C||B||^2 over a sample.

    Returns C_est (clipped below at zero), the clipping margin, and the raw
    per-sample constants.
    """
    raws = []
    for B in fields:
        nsq = l2_norm(B) ** 2
        if nsq == 0.0:
            raise DegenerateSample("coercivity sample with ||B|| = 0")
        lb = apply_L_grid(coeffs, B)
        pairing = integrate(lb.values * B.values, B.dx, B.dim)
        raws.append(((nu / 2.0) * h1_seminorm(B) ** 2 + pairing) / nsq)
    worst = max(raws)
    c_est = max(worst, 0.0)
    return {"C_est": c_est, "margin": c_est - worst, "raw": raws}


def interpolation_ratio(f: GridField, g: GridField, h: GridField, i_axis: int,
                        p: float) -> float:
    """int f g d_i h dx over ||g||_p ||f||_{1,2} ||h||_{1,2} for scalar fields."""
    for name, fld in (("f", f), ("g", g), ("h", h)):
        if fld.ncomp != 1:
            raise DimensionMismatch(f"interpolation_ratio needs scalar fields, {name} has {fld.ncomp}")
    den = lp_norm(g, p) * w12_norm(f) * w12_norm(h)
    if den == 0.0:
        raise DegenerateSample("interpolation ratio with vanishing denominator")
    dih = d1(h.values[0], i_axis, h.dx)
    num = integrate(f.values[0] * g.values[0] * dih, f.dx, f.dim)
    return num / den
