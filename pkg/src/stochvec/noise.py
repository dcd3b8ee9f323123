"""Finite noise bases, their covariance structure, and Brownian ensembles.

The covariance Q^{ab}(x, y) = sum_k sigma_k^a(x) sigma_k^b(y) and its partial
derivatives are evaluated as exact finite sums over the basis fields; the
diagonal Q(x, x) must stay uniformly positive definite for the second-order
operator built from it to be elliptic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidConfig
from .fields import GridSpec, constant_field, shear_mode

__all__ = [
    "NoiseBasis", "EllipticityReport", "BrownianEnsemble",
    "covariance", "covariance_derivatives", "check_ellipticity",
    "generate_ensemble", "coarsen_increments",
    "constant_basis", "constant_plus_shear_basis",
]


@dataclass(frozen=True)
class NoiseBasis:
    """Ordered finite family {sigma_k} of divergence-free C^2 fields.

    An empty basis (K = 0) is allowed for degenerate-case checks; give it an
    explicit ``dim_hint`` so covariance shapes stay well defined.
    """

    sigmas: tuple
    dim_hint: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sigmas", tuple(self.sigmas))
        if self.sigmas:
            d = self.sigmas[0].dim
            if any(s.dim != d for s in self.sigmas):
                raise DimensionMismatch("noise basis mixes spatial dimensions")

    @property
    def K(self) -> int:
        return len(self.sigmas)

    @property
    def dim(self) -> int:
        if not self.sigmas:
            if self.dim_hint:
                return self.dim_hint
            raise DimensionMismatch("empty basis has no dimension")
        return self.sigmas[0].dim

    def sum_sq_bound(self, pts: np.ndarray) -> float:
        """sup over pts of sum_k |sigma_k(x)|^2 (finite by construction)."""
        if not self.sigmas:
            return 0.0
        tot = sum(np.sum(s.value(pts) ** 2, axis=-1) for s in self.sigmas)
        return float(np.max(tot))


def covariance(basis: NoiseBasis, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Q(x, y), shape (..., d, d); Q(x, y) = Q(y, x)^T by construction."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x.shape[-1]
    out = np.zeros(np.broadcast_shapes(x.shape[:-1], y.shape[:-1]) + (d, d))
    for s in basis.sigmas:
        out += np.einsum("...a,...b->...ab", s.value(x), s.value(y))
    return out


_WHICH = ("d1", "d2", "d1d1", "d1d2", "d2d2")


def covariance_derivatives(basis: NoiseBasis, x: np.ndarray, y: np.ndarray,
                           which: str) -> np.ndarray:
    """Partial derivatives of Q as exact sums of sigma-derivative products.

    Derivative axes trail the component axes: first-order results have shape
    (..., a, b, i) = d_i^{(slot)} Q^{ab}; second-order (..., a, b, i, j) with
    i the first listed slot's index and j the second.
    """
    if which not in _WHICH:
        raise InvalidConfig(f"which must be one of {_WHICH}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x.shape[-1]
    base = np.broadcast_shapes(x.shape[:-1], y.shape[:-1])
    if which in ("d1", "d2"):
        out = np.zeros(base + (d, d, d))
    else:
        out = np.zeros(base + (d, d, d, d))
    for s in basis.sigmas:
        sx, sy = s.value(x), s.value(y)
        if which == "d1":
            out += np.einsum("...ai,...b->...abi", s.jacobian(x), sy)
        elif which == "d2":
            out += np.einsum("...a,...bi->...abi", sx, s.jacobian(y))
        elif which == "d1d1":
            out += np.einsum("...aij,...b->...abij", s.hessian(x), sy)
        elif which == "d1d2":
            out += np.einsum("...ai,...bj->...abij", s.jacobian(x), s.jacobian(y))
        elif which == "d2d2":
            out += np.einsum("...a,...bij->...abij", sx, s.hessian(y))
    return out


@dataclass(frozen=True)
class EllipticityReport:
    """Smallest eigenvalue of Q(x, x) over a sample set."""

    nu_est: float
    worst_x: np.ndarray
    pass_: bool

    def __bool__(self):
        return self.pass_


def check_ellipticity(basis: NoiseBasis, points: np.ndarray) -> EllipticityReport:
    """Minimum over sampled x of the smallest eigenvalue of Q(x, x)."""
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        raise InvalidConfig("check_ellipticity needs a nonempty sample set")
    pts = pts.reshape(-1, pts.shape[-1])
    if basis.K == 0:
        return EllipticityReport(0.0, pts[0], False)
    q = covariance(basis, pts, pts)
    eigs = np.linalg.eigvalsh(q)            # ascending
    idx = int(np.argmin(eigs[:, 0]))
    nu = float(eigs[idx, 0])
    return EllipticityReport(nu, pts[idx], nu > 0.0)


def ellipticity_lattice(spec: GridSpec, per_axis: int = 32) -> np.ndarray:
    """Default sample lattice for the nu estimate."""
    ax = -spec.extent + (2 * spec.extent / per_axis) * np.arange(per_axis)
    mesh = np.meshgrid(*([ax] * spec.dim), indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, spec.dim)


# ---------------------------------------------------------------------------
# Brownian increments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BrownianEnsemble:
    """M independent K-dimensional increment sequences on a uniform time grid.

    Increments are generated lazily per sample from SeedSequence(seed, m), so
    any worker can materialize any sample bit-identically in any order.
    """

    M: int
    K: int
    T: float
    N: int
    seed: int

    def __post_init__(self):
        if min(self.M, self.K, self.N) < 1 or self.T <= 0:
            raise InvalidConfig("ensemble needs M, K, N >= 1 and T > 0")

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N + 1)

    def increments(self, m: int) -> np.ndarray:
        """Increment block for sample m, shape (N, K), N(0, dt) entries."""
        if not 0 <= m < self.M:
            raise InvalidConfig(f"sample index {m} out of range [0, {self.M})")
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(m,))
        rng = np.random.Generator(np.random.PCG64(ss))
        return rng.standard_normal((self.N, self.K)) * np.sqrt(self.dt)


def generate_ensemble(K: int, M: int, T: float, N: int, seed: int) -> BrownianEnsemble:
    return BrownianEnsemble(M=M, K=K, T=T, N=N, seed=seed)


def coarsen_increments(dW: np.ndarray, factor: int) -> np.ndarray:
    """Aggregate fine increments into factor-wide steps of the same path."""
    n, k = dW.shape
    if n % factor:
        raise InvalidConfig(f"cannot coarsen {n} steps by {factor}")
    return dW.reshape(n // factor, factor, k).sum(axis=1)


# ---------------------------------------------------------------------------
# built-in bases
# ---------------------------------------------------------------------------

def constant_basis(dim: int) -> NoiseBasis:
    """sigma_k = e_k, k = 1..d; Q(x, y) = Id everywhere."""
    eye = np.eye(dim)
    return NoiseBasis(tuple(constant_field(eye[k]) for k in range(dim)))


def constant_plus_shear_basis(dim: int = 2, amplitude: float = 0.25,
                              n_shear: int = 2) -> NoiseBasis:
    """Constant basis plus low-wavenumber divergence-free shear modes.

    Q(x, x) = Id + (PSD part), so nu_est >= 1 regardless of amplitude.
    """
    if dim != 2:
        raise DimensionMismatch("shear demo basis implemented for d=2")
    sigmas = list(constant_basis(dim).sigmas)
    shear_specs = [((1.0, 0.0), (0.0, 1.0), 0.0),
                   ((0.0, 1.0), (1.0, 0.0), 0.7),
                   ((2.0, 0.0), (0.0, 1.0), 1.3),
                   ((0.0, 2.0), (1.0, 0.0), 2.1)]
    for k, e, ph in shear_specs[:n_shear]:
        sigmas.append(shear_mode(k, e, amplitude, ph))
    return NoiseBasis(tuple(sigmas))
