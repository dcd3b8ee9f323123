"""Vector fields on the periodic box [-L, L)^d.

Two carriers: :class:`AnalyticField` wraps closed-form evaluators with exact
first and second derivatives; :class:`GridField` samples d components on a
uniform periodic grid and differentiates with 2nd-order central stencils.
A truncated-Gaussian :class:`Mollifier` smooths rough fields by discrete
periodic convolution.

Conventions: point arrays have components on the last axis, shape (..., d);
jacobians are (..., a, i) = d_i f^a; hessians (..., a, i, j) = d_i d_j f^a.
Grid value arrays put the component axis first, shape (ncomp, n, ..., n).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch, KernelUnderresolved, MissingDerivatives

__all__ = [
    "GridSpec", "GridField", "AnalyticField", "Mollifier",
    "sample", "divergence", "mollify", "wrap_coords",
    "d1", "d2", "integrate", "l2_norm", "h1_seminorm", "w12_norm", "sup_norm",
    "lp_norm", "gradient",
    "zero_field", "constant_field", "trig_field", "taylor_green", "shear_mode",
    "gaussian_bump", "gaussian_vortex", "singular_rotational",
    "random_trig_field", "random_scalar_field", "combine",
]


# ---------------------------------------------------------------------------
# grid plumbing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on [-L, L)^d with n nodes per axis."""

    dim: int
    extent: float
    n: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise DimensionMismatch(f"dim must be 2 or 3, got {self.dim}")
        if self.n < 4 or self.extent <= 0:
            raise DimensionMismatch("need n >= 4 and extent > 0")

    @property
    def dx(self) -> float:
        return 2.0 * self.extent / self.n

    def axis(self) -> np.ndarray:
        return -self.extent + self.dx * np.arange(self.n)

    def nodes(self) -> np.ndarray:
        """All grid nodes, shape (n, ..., n, d)."""
        ax = self.axis()
        mesh = np.meshgrid(*([ax] * self.dim), indexing="ij")
        return np.stack(mesh, axis=-1)


def wrap_coords(pts: np.ndarray, extent: float) -> np.ndarray:
    """Map coordinates into [-L, L) periodically."""
    return np.mod(pts + extent, 2.0 * extent) - extent


@dataclass(frozen=True)
class GridField:
    """d or 1 components sampled on a periodic grid, immutable."""

    values: np.ndarray          # (ncomp, n, ..., n)
    extent: float
    t: float = 0.0
    name: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim < 3 or v.ndim > 4:
            raise DimensionMismatch(f"values must be (ncomp, n[, n], n), got shape {v.shape}")
        n = v.shape[1]
        if any(s != n for s in v.shape[1:]):
            raise DimensionMismatch(f"grid must be square, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("GridField values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.ndim - 1

    @property
    def ncomp(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def dx(self) -> float:
        return 2.0 * self.extent / self.n

    @property
    def spec(self) -> GridSpec:
        return GridSpec(self.dim, self.extent, self.n)

    def with_values(self, values: np.ndarray, name: str = "") -> "GridField":
        return GridField(values, self.extent, t=self.t, name=name or self.name)

    def __add__(self, other: "GridField") -> "GridField":
        self._check_compatible(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "GridField") -> "GridField":
        self._check_compatible(other)
        return self.with_values(self.values - other.values)

    def __mul__(self, scalar: float) -> "GridField":
        return self.with_values(self.values * float(scalar))

    __rmul__ = __mul__

    def _check_compatible(self, other: "GridField"):
        if self.values.shape != other.values.shape or self.extent != other.extent:
            raise DimensionMismatch("grid fields are not on the same grid")


# central periodic differences on raw arrays -------------------------------

def d1(arr: np.ndarray, axis: int, dx: float) -> np.ndarray:
    """2nd-order central first derivative along a spatial axis (periodic)."""
    return (np.roll(arr, -1, axis=axis) - np.roll(arr, 1, axis=axis)) / (2.0 * dx)


def d2(arr: np.ndarray, ax_i: int, ax_j: int, dx: float) -> np.ndarray:
    """Central second derivative; the pure second difference when i == j."""
    if ax_i == ax_j:
        return (np.roll(arr, -1, axis=ax_i) - 2.0 * arr + np.roll(arr, 1, axis=ax_i)) / dx ** 2
    return d1(d1(arr, ax_i, dx), ax_j, dx)


def gradient(f: GridField) -> np.ndarray:
    """All first derivatives, shape (ncomp, d, n, ..., n)."""
    out = np.empty((f.ncomp, f.dim) + f.values.shape[1:])
    for a in range(f.ncomp):
        for i in range(f.dim):
            out[a, i] = d1(f.values[a], i, f.dx)
    return out


def divergence(f: GridField) -> GridField:
    """Sum of d_a f^a with central periodic differences; 1-component field."""
    if f.ncomp != f.dim:
        raise DimensionMismatch("divergence needs a d-component field")
    out = np.zeros(f.values.shape[1:])
    for a in range(f.dim):
        out += d1(f.values[a], a, f.dx)
    return f.with_values(out[None], name=f"div({f.name})" if f.name else "div")


# quadrature and norms ------------------------------------------------------

def integrate(values: np.ndarray, dx: float, dim: int) -> float:
    """Box quadrature (periodic trapezoid = plain sum) of a nodal array."""
    return float(np.sum(values)) * dx ** dim


def l2_norm(f: GridField) -> float:
    return np.sqrt(integrate(f.values ** 2, f.dx, f.dim))


def h1_seminorm(f: GridField) -> float:
    return np.sqrt(integrate(gradient(f) ** 2, f.dx, f.dim))


def w12_norm(f: GridField) -> float:
    """(||f||_2^2 + ||Df||_2^2)^(1/2) with central differences."""
    return np.sqrt(l2_norm(f) ** 2 + h1_seminorm(f) ** 2)


def sup_norm(f: GridField) -> float:
    return float(np.max(np.abs(f.values)))


def lp_norm(f: GridField, p: float) -> float:
    return integrate(np.abs(f.values) ** p, f.dx, f.dim) ** (1.0 / p)


# ---------------------------------------------------------------------------
# analytic fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnalyticField:
    """Closed-form field with exact derivatives where available.

    ``value(pts, t)`` maps (..., d) points to (..., m) values; ``jacobian``
    and ``hessian`` add one and two trailing derivative axes. Fields without
    closed-form derivatives (e.g. the singular drift) leave them as None.
    """

    dim: int
    value_fn: Callable
    jacobian_fn: Optional[Callable] = None
    hessian_fn: Optional[Callable] = None
    ncomp: int = 0          # 0 means "same as dim"
    name: str = ""
    is_constant: bool = False      # lets integrators skip vanishing jacobians

    @property
    def m(self) -> int:
        return self.ncomp or self.dim

    def value(self, pts: np.ndarray, t: float = 0.0) -> np.ndarray:
        return self.value_fn(np.asarray(pts, dtype=float), t)

    __call__ = value

    def jacobian(self, pts: np.ndarray, t: float = 0.0) -> np.ndarray:
        if self.jacobian_fn is None:
            raise MissingDerivatives(f"field {self.name!r} has no jacobian")
        return self.jacobian_fn(np.asarray(pts, dtype=float), t)

    def hessian(self, pts: np.ndarray, t: float = 0.0) -> np.ndarray:
        if self.hessian_fn is None:
            raise MissingDerivatives(f"field {self.name!r} has no hessian")
        return self.hessian_fn(np.asarray(pts, dtype=float), t)

    @property
    def has_jacobian(self) -> bool:
        return self.jacobian_fn is not None

    @property
    def has_hessian(self) -> bool:
        return self.hessian_fn is not None


def sample(f: AnalyticField, spec: GridSpec, t: float = 0.0, name: str = "") -> GridField:
    """Pointwise evaluation of an analytic field at the grid nodes."""
    vals = f.value(spec.nodes(), t)             # (n, ..., n, m)
    return GridField(np.moveaxis(vals, -1, 0), spec.extent, t=t, name=name or f.name)


def combine(fields: Sequence[AnalyticField], coeffs: Sequence[float], name: str = "") -> AnalyticField:
    """Pointwise linear combination sum_k c_k f_k with combined derivatives."""
    if not fields:
        raise DimensionMismatch("combine needs at least one field")
    dim, m = fields[0].dim, fields[0].m
    if any(f.dim != dim or f.m != m for f in fields):
        raise DimensionMismatch("combine: mixed dimensions")
    coeffs = [float(c) for c in coeffs]

    def val(pts, t):
        return sum(c * f.value(pts, t) for c, f in zip(coeffs, fields))

    jac = None
    if all(f.has_jacobian for f in fields):
        def jac(pts, t):
            return sum(c * f.jacobian(pts, t) for c, f in zip(coeffs, fields))

    hess = None
    if all(f.has_hessian for f in fields):
        def hess(pts, t):
            return sum(c * f.hessian(pts, t) for c, f in zip(coeffs, fields))

    return AnalyticField(dim, val, jac, hess, ncomp=m, name=name or "combination")


# -- library ----------------------------------------------------------------

def zero_field(dim: int, ncomp: int = 0) -> AnalyticField:
    m = ncomp or dim

    def val(pts, t):
        return np.zeros(pts.shape[:-1] + (m,))

    def jac(pts, t):
        return np.zeros(pts.shape[:-1] + (m, dim))

    def hess(pts, t):
        return np.zeros(pts.shape[:-1] + (m, dim, dim))

    return AnalyticField(dim, val, jac, hess, ncomp=m, name="zero", is_constant=True)


def constant_field(vec: Sequence[float]) -> AnalyticField:
    v = np.asarray(vec, dtype=float)
    dim = v.size

    def val(pts, t):
        return np.broadcast_to(v, pts.shape[:-1] + (dim,)).copy()

    def jac(pts, t):
        return np.zeros(pts.shape[:-1] + (dim, dim))

    def hess(pts, t):
        return np.zeros(pts.shape[:-1] + (dim, dim, dim))

    return AnalyticField(dim, val, jac, hess, name=f"const{tuple(v)}", is_constant=True)


def trig_field(dim: int, modes: Sequence[tuple], ncomp: int = 0, name: str = "trig") -> AnalyticField:
    """Sum of modes amp * sin(k.x + phase); amp is an m-vector, k a d-vector.

    Divergence-free whenever k . amp = 0 for every mode.
    """
    m = ncomp or dim
    ks = np.array([np.asarray(k, dtype=float) for k, _, _ in modes])        # (M, d)
    amps = np.array([np.asarray(a, dtype=float) for _, a, _ in modes])      # (M, m)
    phs = np.array([float(p) for _, _, p in modes])                         # (M,)

    def phases(pts):
        return pts @ ks.T + phs                                             # (..., M)

    def val(pts, t):
        return np.sin(phases(pts)) @ amps

    def jac(pts, t):
        c = np.cos(phases(pts))                                             # (..., M)
        return np.einsum("...M,Ma,Mi->...ai", c, amps, ks)

    def hess(pts, t):
        s = -np.sin(phases(pts))
        return np.einsum("...M,Ma,Mi,Mj->...aij", s, amps, ks, ks)

    return AnalyticField(dim, val, jac, hess, ncomp=m, name=name)


def taylor_green(amplitude: float = 1.0) -> AnalyticField:
    """d=2 cellular field (-sin x2, sin x1), divergence-free."""
    return trig_field(2, [((0.0, 1.0), (-amplitude, 0.0), 0.0),
                          ((1.0, 0.0), (0.0, amplitude), 0.0)], name="taylor_green")


def shear_mode(wavevector: Sequence[float], direction: Sequence[float],
               amplitude: float = 1.0, phase: float = 0.0) -> AnalyticField:
    """Sinusoidal shear amp * dir * sin(k.x + phase); needs k . dir = 0."""
    k = np.asarray(wavevector, dtype=float)
    e = np.asarray(direction, dtype=float)
    if abs(float(k @ e)) > 1e-12:
        raise DimensionMismatch("shear mode needs wavevector orthogonal to direction")
    return trig_field(k.size, [(k, amplitude * e, phase)],
                      name=f"shear(k={tuple(k)})")


def gaussian_bump(dim: int, center: Sequence[float], width: float,
                  amps: Sequence[float], images: int = 0, extent: float = np.pi) -> AnalyticField:
    """amp * exp(-|x-c|^2 / (2 s^2)), optionally summed over periodic images."""
    c = np.asarray(center, dtype=float)
    a = np.asarray(amps, dtype=float)
    s2 = float(width) ** 2
    shifts = _image_shifts(dim, images, extent)

    def val(pts, t):
        out = np.zeros(pts.shape[:-1] + (a.size,))
        for sh in shifts:
            r = pts - (c + sh)
            out += np.exp(-np.sum(r * r, axis=-1) / (2 * s2))[..., None] * a
        return out

    def jac(pts, t):
        out = np.zeros(pts.shape[:-1] + (a.size, dim))
        for sh in shifts:
            r = pts - (c + sh)
            g = np.exp(-np.sum(r * r, axis=-1) / (2 * s2))
            out += np.einsum("...,a,...i->...ai", g, a, -r / s2)
        return out

    def hess(pts, t):
        out = np.zeros(pts.shape[:-1] + (a.size, dim, dim))
        eye = np.eye(dim)
        for sh in shifts:
            r = pts - (c + sh)
            g = np.exp(-np.sum(r * r, axis=-1) / (2 * s2))
            rr = np.einsum("...i,...j->...ij", r / s2, r / s2) - eye / s2
            out += np.einsum("...,a,...ij->...aij", g, a, rr)
        return out

    return AnalyticField(dim, val, jac, hess, ncomp=a.size, name="gaussian_bump")


def gaussian_vortex(center: Sequence[float], width: float, amplitude: float = 1.0,
                    images: int = 0, extent: float = np.pi) -> AnalyticField:
    """Divergence-free d=2 field (d2 psi, -d1 psi) with Gaussian stream psi."""
    c = np.asarray(center, dtype=float)
    s2 = float(width) ** 2
    shifts = _image_shifts(2, images, extent)

    def parts(pts):
        r_acc = []
        for sh in shifts:
            r = pts - (c + sh)
            r_acc.append((r, np.exp(-np.sum(r * r, axis=-1) / (2 * s2))))
        return r_acc

    def val(pts, t):
        out = np.zeros(pts.shape[:-1] + (2,))
        for r, g in parts(pts):
            # psi = A exp(.); v = (d2 psi, -d1 psi)
            out[..., 0] += amplitude * g * (-r[..., 1] / s2)
            out[..., 1] += amplitude * g * (r[..., 0] / s2)
        return out

    def jac(pts, t):
        out = np.zeros(pts.shape[:-1] + (2, 2))
        for r, g in parts(pts):
            x, y = r[..., 0] / s2, r[..., 1] / s2
            out[..., 0, 0] += amplitude * g * (x * y)
            out[..., 0, 1] += amplitude * g * (y * y - 1.0 / s2)
            out[..., 1, 0] += amplitude * g * (1.0 / s2 - x * x)
            out[..., 1, 1] += amplitude * g * (-x * y)
        return out

    def hess(pts, t):
        out = np.zeros(pts.shape[:-1] + (2, 2, 2))
        for r, g in parts(pts):
            x, y = r[..., 0] / s2, r[..., 1] / s2
            # third derivatives of the Gaussian stream, arranged as hessian of v
            out[..., 0, 0, 0] += amplitude * g * (y / s2 - x * x * y)
            out[..., 0, 0, 1] += amplitude * g * (x / s2 - x * y * y)
            out[..., 0, 1, 0] += amplitude * g * (x / s2 - x * y * y)
            out[..., 0, 1, 1] += amplitude * g * (3 * y / s2 - y ** 3)
            out[..., 1, 0, 0] += amplitude * g * (x ** 3 - 3 * x / s2)
            out[..., 1, 0, 1] += amplitude * g * (x * x * y - y / s2)
            out[..., 1, 1, 0] += amplitude * g * (x * x * y - y / s2)
            out[..., 1, 1, 1] += amplitude * g * (x * y * y - x / s2)
        return out

    return AnalyticField(2, val, jac, hess, name="gaussian_vortex")


def _image_shifts(dim: int, images: int, extent: float) -> list:
    if images == 0:
        return [np.zeros(dim)]
    rng = range(-images, images + 1)
    if dim == 2:
        return [2 * extent * np.array([i, j]) for i in rng for j in rng]
    return [2 * extent * np.array([i, j, k]) for i in rng for j in rng for k in rng]


def _smoothstep(u: np.ndarray) -> np.ndarray:
    """C^inf transition: 0 for u<=0, 1 for u>=1."""
    def bump(x):
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = np.exp(-1.0 / x[pos])
        return out
    a = bump(u)
    b = bump(1.0 - u)
    return a / (a + b + 1e-300)


def singular_rotational(alpha: float = 1.5, r_core: float = 1e-8,
                        r_on: float = None, r_off: float = None,
                        extent: float = np.pi, amplitude: float = 1.0) -> AnalyticField:
    """d=2 rough drift x_perp / |x|^alpha, smoothly cut off outside |x| < L/2.

    In L^p for p < 2/(alpha-1) near the origin (p=3 works for alpha=1.5) and
    divergence-free away from it. Exposes values only; not differentiable at 0.
    """
    if r_on is None:
        r_on = 0.35 * extent
    if r_off is None:
        r_off = 0.5 * extent

    def val(pts, t):
        x, y = pts[..., 0], pts[..., 1]
        r = np.sqrt(x * x + y * y)
        r_eff = np.maximum(r, r_core)
        chi = _smoothstep((r_off - r) / (r_off - r_on))
        mag = amplitude * chi / r_eff ** alpha
        return np.stack([-y * mag, x * mag], axis=-1)

    return AnalyticField(2, val, None, None, name="singular_rotational")


def random_trig_field(dim: int, seed: int, n_modes: int = 4, kmax: int = 3,
                      amplitude: float = 1.0, divergence_free: bool = False,
                      ncomp: int = 0) -> AnalyticField:
    """Seeded band-limited trig polynomial; exact derivatives for oracles."""
    rng = np.random.default_rng(seed)
    m = ncomp or dim
    modes = []
    for _ in range(n_modes):
        k = rng.integers(-kmax, kmax + 1, size=dim).astype(float)
        if not np.any(k):
            k[rng.integers(dim)] = 1.0
        if divergence_free:
            if dim != 2:
                raise DimensionMismatch("divergence_free random fields implemented for d=2")
            perp = np.array([-k[1], k[0]])
            nrm = np.linalg.norm(perp)
            amp = amplitude * rng.normal() * perp / nrm
        else:
            amp = amplitude * rng.normal(size=m) / np.sqrt(n_modes)
        modes.append((k, amp, rng.uniform(0, 2 * np.pi)))
    return trig_field(dim, modes, ncomp=m, name=f"random_trig(seed={seed})")


def random_scalar_field(dim: int, seed: int, n_modes: int = 4, kmax: int = 3,
                        amplitude: float = 1.0) -> AnalyticField:
    return random_trig_field(dim, seed, n_modes, kmax, amplitude, ncomp=1)


# ---------------------------------------------------------------------------
# mollification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Mollifier:
    """Truncated renormalized Gaussian of width eps (cut at 4 eps per axis)."""

    eps: float

    def weights1d(self, dx: float) -> np.ndarray:
        """Symmetric 1-d stencil with exact unit sum."""
        if self.eps < dx:
            raise KernelUnderresolved(f"eps={self.eps:g} < dx={dx:g}")
        r = int(np.ceil(4.0 * self.eps / dx))
        off = np.arange(-r, r + 1) * dx
        w = np.exp(-off ** 2 / (2.0 * self.eps ** 2))
        return w / w.sum()

    def kernel(self, dx: float, dim: int) -> np.ndarray:
        """Dense separable stencil (weights; multiply by dx^-d for density)."""
        w = self.weights1d(dx)
        out = w
        for _ in range(dim - 1):
            out = np.multiply.outer(out, w)
        return out


def mollify(v, m: Mollifier, spec: GridSpec = None, t: float = 0.0) -> GridField:
    """Discrete periodic convolution with the mollifier kernel.

    Analytic inputs are sampled on the grid first; the per-axis stencils have
    unit sum, so constants are preserved exactly and the sup norm cannot grow.
    """
    if isinstance(v, AnalyticField):
        if spec is None:
            raise DimensionMismatch("mollify of an analytic field needs a grid spec")
        v = sample(v, spec, t=t)
    w = m.weights1d(v.dx)
    out = np.empty_like(v.values)
    for a in range(v.ncomp):
        acc = v.values[a]
        for ax in range(v.dim):
            acc = ndimage.convolve1d(acc, w, axis=ax, mode="wrap")
        out[a] = acc
    return v.with_values(out, name=f"mollified({v.name})" if v.name else "mollified")
