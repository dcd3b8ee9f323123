"""Stochastic exponentials and Monte-Carlo vs. PDE cross-validation.

The deterministic function V(t, x) = E[B(t, x) e_f(t)] is estimated two ways:
by averaging representation-formula samples weighted with the exponential
e_f(t) = exp(sum_k int f_k dW^k - 1/2 sum_k int |f_k|^2 ds), and by stepping
the parabolic equation dV/dt = L V - [v + h, V]. Their normalized L2 gap,
judged against 3 standard errors plus a discretization allowance, is the
artifact's central acceptance check. Second moments E[B^a B^b] get the same
treatment against the coupled moment system.

Monte-Carlo reductions run over fixed-size path chunks combined in index
order, so results are bit-identical regardless of worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import multiprocessing
import numpy as np

from .errors import InsufficientSamples, InvalidConfig, TolExceeded
from .fields import GridField, GridSpec, Mollifier, l2_norm, mollify, sample
from .flow import SpdeSampleField, solve_spde_chunk
from .lie import OperatorCoefficients
from .noise import BrownianEnsemble, NoiseBasis
from .parabolic import AdvectionData, pack_sym, run_V, run_moments, sym_index_pairs

__all__ = [
    "FSpec", "StochasticExponential", "advance_exponential", "exponential_value",
    "EnsembleEstimate", "run_spde_ensemble", "estimate_V", "estimate_moments",
    "DualityReport", "duality_check", "moment_check", "two_solution_comparison",
]

CHUNK_SIZE = 16


# ---------------------------------------------------------------------------
# deterministic integrands f and their exponentials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FSpec:
    """Piecewise-constant f on the flow time grid: zero, constant, or one sign flip."""

    kind: str = "zero"
    values: tuple = ()
    flip_time: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "sign_flip"):
            raise InvalidConfig(f"unknown f kind {self.kind!r}")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.kind != "zero" and not self.values:
            raise InvalidConfig(f"f kind {self.kind!r} needs values")

    @property
    def n_modes(self) -> int:
        return 0 if self.kind == "zero" else len(self.values)

    def at(self, t: float) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(0)
        v = np.array(self.values)
        if self.kind == "sign_flip" and t >= self.flip_time:
            return -v
        return v


@dataclass
class StochasticExponential:
    """Running value of e_f along one path, updated exactly per step."""

    log_value: float = 0.0
    compensator: float = 0.0       # (1/2) sum_k int |f_k|^2 ds so far

    @property
    def value(self) -> float:
        return float(np.exp(self.log_value))


def advance_exponential(state: StochasticExponential, f_slice: np.ndarray,
                        dW_slice: np.ndarray, dt: float) -> StochasticExponential:
    """log e_f += f . dW - (1/2)|f|^2 dt (exact for piecewise-constant f)."""
    f_slice = np.asarray(f_slice, dtype=float)
    if f_slice.size != np.asarray(dW_slice).size:
        raise InvalidConfig("f slice and increment slice have different sizes")
    quad = 0.5 * float(f_slice @ f_slice) * dt
    state.log_value += float(f_slice @ np.asarray(dW_slice)) - quad
    state.compensator += quad
    return state


def exponential_value(f: FSpec, dW: np.ndarray, dt: float) -> float:
    """e_f at the final time of one increment block (n modes <= K)."""
    n = f.n_modes
    if n == 0:
        return 1.0
    state = StochasticExponential()
    for j in range(dW.shape[0]):
        advance_exponential(state, f.at(j * dt), dW[j, :n], dt)
    return state.value


def _exponential_chunk(f: FSpec, chunk: np.ndarray, dt: float) -> np.ndarray:
    """Final e_f for every path of a (C, N, K) increment chunk."""
    C, N, _ = chunk.shape
    n = f.n_modes
    if n == 0:
        return np.ones(C)
    log_e = np.zeros(C)
    for j in range(N):
        fj = f.at(j * dt)
        log_e += chunk[:, j, :n] @ fj - 0.5 * float(fj @ fj) * dt
    return np.exp(log_e)


# ---------------------------------------------------------------------------
# ensemble driver
# ---------------------------------------------------------------------------

@dataclass
class EnsembleEstimate:
    """Streaming means and standard errors over an SPDE sample ensemble."""

    M: int
    mean_V: Optional[GridField] = None
    se_V: Optional[GridField] = None
    mean_u: Optional[GridField] = None
    se_u: Optional[GridField] = None
    mean_exp: float = 1.0
    se_exp: float = 0.0
    diagnostics: dict = dc_field(default_factory=dict)
    samples: list = dc_field(default_factory=list)


_TASK = {}


def _chunk_partials(bounds):
    start, end = bounds
    t = _TASK
    ens: BrownianEnsemble = t["ensemble"]
    chunk = np.stack([ens.increments(m) for m in range(start, end)])
    vals, diags = solve_spde_chunk(t["B0"], t["v"], t["basis"], chunk, ens.dt,
                                   t["spec"], tol_inv=t["tol_inv"])
    e = _exponential_chunk(t["f"], chunk, ens.dt)
    out = {"count": end - start, "sum_e": e.sum(), "sumsq_e": (e * e).sum()}
    out["diag_rows"] = [(start + c, d["max_abs_det_minus_one"], d["max_roundtrip_residual"],
                         d["flagged_nodes"], float(e[c])) for c, d in enumerate(diags)]
    if "V" in t["want"]:
        weighted = vals * e.reshape((-1,) + (1,) * (vals.ndim - 1))
        out["sum_V"] = weighted.sum(axis=0)
        out["sumsq_V"] = (weighted ** 2).sum(axis=0)
    if "u" in t["want"]:
        pairs = sym_index_pairs(t["spec"].dim)
        prods = np.stack([vals[:, a] * vals[:, b] for a, b in pairs], axis=1)
        out["sum_u"] = prods.sum(axis=0)
        out["sumsq_u"] = (prods ** 2).sum(axis=0)
    out["max_det_err"] = max(d["max_abs_det_minus_one"] for d in diags)
    out["max_residual"] = max(d["max_roundtrip_residual"] for d in diags)
    out["flagged"] = sum(d["flagged_nodes"] for d in diags)
    out["max_jnorm"] = max(d["max_jacobian_norm"] for d in diags)
    if t["collect"]:
        out["fields"] = [(start + c, vals[c], e[c], diags[c]) for c in range(end - start)]
    return out


def run_spde_ensemble(B0, v, basis: NoiseBasis, ensemble: BrownianEnsemble,
                      spec: GridSpec, f: FSpec = FSpec(), want: Sequence[str] = ("V",),
                      jobs: int = 1, chunk_size: int = CHUNK_SIZE,
                      tol_inv: float = 1e-2, collect: bool = False) -> EnsembleEstimate:
    """Estimate V and/or second moments over all ensemble paths.

    Chunks are fixed-size blocks of sample indices; partial sums combine in
    block order, so the result does not depend on ``jobs``.
    """
    if f.n_modes > basis.K:
        raise InvalidConfig("f loads more modes than the basis provides")
    M = ensemble.M
    bounds = [(s, min(s + chunk_size, M)) for s in range(0, M, chunk_size)]
    _TASK.clear()
    _TASK.update(B0=B0, v=v, basis=basis, ensemble=ensemble, spec=spec, f=f,
                 want=tuple(want), tol_inv=tol_inv, collect=collect)
    if jobs > 1:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as ex:
            partials = list(ex.map(_chunk_partials, bounds))
    else:
        partials = [_chunk_partials(b) for b in bounds]
    _TASK.clear()
    return _reduce_partials(partials, M, spec, want, collect)


def _mean_se(sum_, sumsq, M):
    mean = sum_ / M
    var = np.maximum(sumsq - M * mean ** 2, 0.0) / (M * (M - 1)) if M > 1 else np.zeros_like(mean)
    return mean, np.sqrt(var)


def _reduce_partials(partials, M, spec, want, collect) -> EnsembleEstimate:
    est = EnsembleEstimate(M=M)
    sum_e = sum(p["sum_e"] for p in partials)
    sumsq_e = sum(p["sumsq_e"] for p in partials)
    me, se = _mean_se(np.array(sum_e), np.array(sumsq_e), M)
    est.mean_exp, est.se_exp = float(me), float(se)
    if "V" in want:
        s = sum(p["sum_V"] for p in partials)
        ss = sum(p["sumsq_V"] for p in partials)
        mean, stderr = _mean_se(s, ss, M)
        est.mean_V = GridField(mean, spec.extent, name="V_mc")
        est.se_V = GridField(stderr, spec.extent, name="V_mc_se")
    if "u" in want:
        s = sum(p["sum_u"] for p in partials)
        ss = sum(p["sumsq_u"] for p in partials)
        mean, stderr = _mean_se(s, ss, M)
        est.mean_u = GridField(mean, spec.extent, name="u_mc")
        est.se_u = GridField(stderr, spec.extent, name="u_mc_se")
    est.diagnostics = {
        "max_abs_det_minus_one": max(p["max_det_err"] for p in partials),
        "max_roundtrip_residual": max(p["max_residual"] for p in partials),
        "flagged_nodes": sum(p["flagged"] for p in partials),
        "max_jacobian_norm": max(p["max_jnorm"] for p in partials),
        "per_sample": [row for p in partials for row in p["diag_rows"]],
    }
    if collect:
        for p in partials:
            for idx, vals, e, diag in p["fields"]:
                fld = GridField(vals, spec.extent, name=f"B_sample{idx}")
                est.samples.append(SpdeSampleField(fld, idx, 0.0, exponential=e,
                                                   diagnostics=diag))
    return est


# ---------------------------------------------------------------------------
# estimators over collected samples
# ---------------------------------------------------------------------------

def estimate_V(samples: Sequence[SpdeSampleField]):
    """Per-node mean of B e_f and its standard error over collected samples."""
    if len(samples) < 2:
        raise InsufficientSamples("estimate_V needs at least 2 samples")
    M = len(samples)
    stack = np.stack([s.field.values * s.exponential for s in samples])
    mean, se = _mean_se(stack.sum(axis=0), (stack ** 2).sum(axis=0), M)
    ref = samples[0].field
    return ref.with_values(mean, name="V_mc"), ref.with_values(se, name="V_mc_se")


def estimate_moments(samples: Sequence[SpdeSampleField]):
    """Symmetric second-moment components and standard errors."""
    if len(samples) < 2:
        raise InsufficientSamples("estimate_moments needs at least 2 samples")
    M = len(samples)
    ref = samples[0].field
    pairs = sym_index_pairs(ref.dim)
    stack = np.stack([np.stack([s.field.values[a] * s.field.values[b] for a, b in pairs])
                      for s in samples])
    mean, se = _mean_se(stack.sum(axis=0), (stack ** 2).sum(axis=0), M)
    return ref.with_values(mean, name="u_mc"), ref.with_values(se, name="u_mc_se")


# ---------------------------------------------------------------------------
# comparison harnesses
# ---------------------------------------------------------------------------

@dataclass
class DualityReport:
    """MC-vs-PDE comparison outcome with everything needed to re-judge it."""

    v_mc: GridField
    se: GridField
    v_pde: GridField
    discrepancy: float
    se_rel: float
    allowance: float
    tol: float
    passed: bool
    M: int
    config_echo: dict = dc_field(default_factory=dict)
    diagnostics: dict = dc_field(default_factory=dict)

    @property
    def max_abs_error(self) -> float:
        return float(np.abs(self.v_mc.values - self.v_pde.values).max())

    def summary(self) -> dict:
        return {
            "discrepancy": self.discrepancy,
            "se_rel": self.se_rel,
            "allowance": self.allowance,
            "tol": self.tol,
            "passed": self.passed,
            "samples": self.M,
            "max_abs_error": self.max_abs_error,
            "diagnostics": self.diagnostics,
            "config": self.config_echo,
        }


def _relative_gap(mc: GridField, se: GridField, pde: GridField, allowance: float):
    denom = l2_norm(pde)
    if denom == 0.0:
        return 0.0, 0.0, allowance
    disc = l2_norm(mc - pde) / denom
    se_rel = l2_norm(se) / denom
    return disc, se_rel, 3.0 * se_rel + allowance


def duality_check(B0, v_eps, basis: NoiseBasis, f: FSpec, t: float,
                  ensemble: BrownianEnsemble, spec: GridSpec,
                  coeffs: Optional[OperatorCoefficients] = None,
                  allowance: float = 0.02, jobs: int = 1,
                  dt_pde: Optional[float] = None, tol_inv: float = 1e-2,
                  config_echo: Optional[dict] = None,
                  raise_on_fail: bool = True) -> DualityReport:
    """Run both legs of V(t, .) = E[B(t, .) e_f(t)] and compare.

    The same mollified drift and the same noise basis drive the Monte-Carlo
    characteristics and the parabolic solver; each path's increments drive
    both B and e_f. Raises TolExceeded (report attached) on failure unless
    ``raise_on_fail`` is falsy.
    """
    if abs(ensemble.T - t) > 1e-12:
        raise InvalidConfig("ensemble horizon must equal the comparison time")
    coeffs = coeffs or OperatorCoefficients(basis)
    est = run_spde_ensemble(B0, v_eps, basis, ensemble, spec, f=f, want=("V",),
                            jobs=jobs, tol_inv=tol_inv)
    V0 = B0 if isinstance(B0, GridField) else sample(B0, spec)
    adv = AdvectionData(spec, v=v_eps, basis=basis, f=f.at)
    state = run_V(V0, coeffs, adv, t, dt=dt_pde)
    disc, se_rel, tol = _relative_gap(est.mean_V, est.se_V, state.field, allowance)
    report = DualityReport(est.mean_V, est.se_V, state.field, float(disc), float(se_rel),
                           allowance, float(tol), bool(disc <= tol), ensemble.M,
                           config_echo=config_echo or {}, diagnostics=est.diagnostics)
    if raise_on_fail and not report.passed:
        raise TolExceeded(f"duality discrepancy {disc:.4f} > tol {tol:.4f}", report)
    return report


def moment_check(B0, v_eps, basis: NoiseBasis, t: float, ensemble: BrownianEnsemble,
                 spec: GridSpec, coeffs: Optional[OperatorCoefficients] = None,
                 allowance: float = 0.05, jobs: int = 1,
                 dt_pde: Optional[float] = None, config_echo: Optional[dict] = None,
                 raise_on_fail: bool = True) -> DualityReport:
    """Second-moment analogue: MC E[B^a B^b] against the coupled moment system."""
    if abs(ensemble.T - t) > 1e-12:
        raise InvalidConfig("ensemble horizon must equal the comparison time")
    coeffs = coeffs or OperatorCoefficients(basis)
    est = run_spde_ensemble(B0, v_eps, basis, ensemble, spec, want=("u",), jobs=jobs)
    b0_grid = B0 if isinstance(B0, GridField) else sample(B0, spec)
    d = spec.dim
    full0 = np.einsum("a...,b...->ab...", b0_grid.values, b0_grid.values)
    U0 = GridField(pack_sym(full0, d), spec.extent, name="u0")
    state = run_moments(U0, basis, coeffs, t, v=v_eps, dt=dt_pde)
    disc, se_rel, tol = _relative_gap(est.mean_u, est.se_u, state.field, allowance)
    report = DualityReport(est.mean_u, est.se_u, state.field, float(disc), float(se_rel),
                           allowance, float(tol), bool(disc <= tol), ensemble.M,
                           config_echo=config_echo or {}, diagnostics=est.diagnostics)
    if raise_on_fail and not report.passed:
        raise TolExceeded(f"moment discrepancy {disc:.4f} > tol {tol:.4f}", report)
    return report


def two_solution_comparison(B0, v_raw, basis: NoiseBasis, ensemble: BrownianEnsemble,
                            spec: GridSpec, eps1: float, eps2: float,
                            M: Optional[int] = None, jobs: int = 1) -> float:
    """Mean per-path L2 distance between solutions built from two mollifications."""
    if eps1 < eps2:
        raise InvalidConfig("expected eps1 >= eps2")
    m1 = mollify(v_raw, Mollifier(eps1), spec)
    m2 = mollify(v_raw, Mollifier(eps2), spec) if eps2 != eps1 else m1
    M = M or ensemble.M
    total = 0.0
    for start in range(0, M, CHUNK_SIZE):
        end = min(start + CHUNK_SIZE, M)
        chunk = np.stack([ensemble.increments(m) for m in range(start, end)])
        vals1, _ = solve_spde_chunk(B0, m1, basis, chunk, ensemble.dt, spec)
        vals2, _ = solve_spde_chunk(B0, m2, basis, chunk, ensemble.dt, spec)
        diff = vals1 - vals2
        sq = np.sum(diff ** 2, axis=tuple(range(1, diff.ndim))) * spec.dx ** spec.dim
        total += float(np.sqrt(sq).sum())
    return total / M
