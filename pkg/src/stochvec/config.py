"""Experiment configuration: strict JSON schema, field/basis builders.

The config file is a single JSON object; unknown keys are rejected with the
offending key path so typos surface immediately. Flags override config keys,
and the resolved config is echoed into every run manifest.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field as dc_field
from typing import Optional

from .duality import FSpec
from .errors import InvalidConfig
from .fields import (AnalyticField, GridSpec, Mollifier, constant_field,
                     gaussian_bump, gaussian_vortex, mollify, shear_mode,
                     singular_rotational, taylor_green)
from .noise import NoiseBasis, constant_basis, constant_plus_shear_basis

__all__ = ["ExperimentConfig", "load_config", "parse_f_spec"]

_TOP_KEYS = {"dim", "extent", "n", "T", "steps", "seed", "samples", "jobs",
             "basis", "v", "B0", "f", "tolerances"}
_TOL_KEYS = {"duality_allowance", "moment_allowance", "tol_inv", "tol_det", "dt_pde"}

_DEFAULT_TOLS = {"duality_allowance": 0.02, "moment_allowance": 0.05,
                 "tol_inv": 1e-2, "tol_det": 1e-3, "dt_pde": None}


def _reject_unknown(d: dict, allowed: set, where: str):
    unknown = set(d) - allowed
    if unknown:
        raise InvalidConfig(f"unknown key(s) {sorted(unknown)} in {where}")


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise InvalidConfig(f"missing key {key!r} in {where}")
    return d[key]


@dataclass
class ExperimentConfig:
    """Fully-resolved experiment parameters."""

    dim: int = 2
    extent: float = math.pi
    n: int = 64
    T: float = 0.25
    steps: int = 64
    seed: int = 20240901
    samples: int = 1000
    jobs: int = 0          # 0 = use available parallelism
    basis_spec: list = dc_field(default_factory=lambda: [{"kind": "constant_basis"}])
    v_spec: dict = dc_field(default_factory=lambda: {"kind": "zero"})
    b0_spec: dict = dc_field(default_factory=lambda: {
        "kind": "gaussian_vortex", "center": [0.0, 0.0], "width": 0.5, "amplitude": 1.0})
    f_spec: dict = dc_field(default_factory=lambda: {"kind": "zero"})
    tolerances: dict = dc_field(default_factory=lambda: dict(_DEFAULT_TOLS))

    # -- construction --------------------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict, where: str = "config") -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise InvalidConfig(f"{where} must be a JSON object")
        _reject_unknown(raw, _TOP_KEYS, where)
        cfg = cls()
        for key in ("dim", "n", "steps", "seed", "samples", "jobs"):
            if key in raw:
                val = raw[key]
                if not isinstance(val, int) or isinstance(val, bool):
                    raise InvalidConfig(f"key {key!r} must be an integer, got {val!r}")
                setattr(cfg, key, val)
        for key in ("extent", "T"):
            if key in raw:
                val = raw[key]
                if not isinstance(val, (int, float)) or isinstance(val, bool):
                    raise InvalidConfig(f"key {key!r} must be a number, got {val!r}")
                setattr(cfg, key, float(val))
        if cfg.dim not in (2, 3):
            raise InvalidConfig(f"dim must be 2 or 3, got {cfg.dim}")
        if min(cfg.n, cfg.steps, cfg.samples) < 1 or cfg.T <= 0 or cfg.extent <= 0 or cfg.jobs < 0:
            raise InvalidConfig("n, steps, samples must be >= 1; T, extent > 0")
        if "basis" in raw:
            if not isinstance(raw["basis"], list) or not raw["basis"]:
                raise InvalidConfig("basis must be a nonempty list of mode specs")
            cfg.basis_spec = raw["basis"]
        if "v" in raw:
            cfg.v_spec = raw["v"]
        if "B0" in raw:
            cfg.b0_spec = raw["B0"]
        if "f" in raw:
            cfg.f_spec = raw["f"]
        if "tolerances" in raw:
            _reject_unknown(raw["tolerances"], _TOL_KEYS, "config.tolerances")
            cfg.tolerances = {**_DEFAULT_TOLS, **raw["tolerances"]}
        env_seed = os.environ.get("STOCHVEC_SEED")
        if env_seed is not None:
            try:
                cfg.seed = int(env_seed)
            except ValueError:
                raise InvalidConfig(f"STOCHVEC_SEED must be an integer, got {env_seed!r}")
        cfg.validate()
        return cfg

    def validate(self):
        self.build_basis()
        self.build_f()
        for spec_dict, where in ((self.b0_spec, "config.B0"), (self.v_spec, "config.v")):
            if not isinstance(spec_dict, dict) or "kind" not in spec_dict:
                raise InvalidConfig(f"{where} must be an object with a 'kind'")
        self.build_B0()
        self._check_v_keys()

    def _check_v_keys(self):
        """Schema check for the v spec without paying for mollification."""
        kind = self.v_spec.get("kind", "zero")
        allowed = {
            "zero": {"kind"},
            "taylor_green": {"kind", "amplitude"},
            "gaussian_vortex": {"kind", "center", "width", "amplitude"},
            "singular": {"kind", "amplitude", "alpha", "mollify_eps"},
        }
        if kind not in allowed:
            raise InvalidConfig(f"unknown v kind {kind!r} in config.v")
        _reject_unknown(self.v_spec, allowed[kind], "config.v")

    def as_dict(self) -> dict:
        return {
            "dim": self.dim, "extent": self.extent, "n": self.n, "T": self.T,
            "steps": self.steps, "seed": self.seed, "samples": self.samples,
            "jobs": self.jobs, "basis": self.basis_spec, "v": self.v_spec,
            "B0": self.b0_spec, "f": self.f_spec, "tolerances": self.tolerances,
        }

    # -- builders ------------------------------------------------------------

    def grid(self, n: Optional[int] = None) -> GridSpec:
        return GridSpec(self.dim, self.extent, n or self.n)

    @property
    def dt(self) -> float:
        return self.T / self.steps

    @property
    def effective_jobs(self) -> int:
        return self.jobs if self.jobs >= 1 else (os.cpu_count() or 1)

    def build_basis(self) -> NoiseBasis:
        sigmas = []
        for i, mode in enumerate(self.basis_spec):
            where = f"config.basis[{i}]"
            if not isinstance(mode, dict):
                raise InvalidConfig(f"{where} must be an object")
            kind = _require(mode, "kind", where)
            if kind == "constant_basis":
                _reject_unknown(mode, {"kind"}, where)
                sigmas.extend(constant_basis(self.dim).sigmas)
            elif kind == "constant_plus_shear":
                _reject_unknown(mode, {"kind", "amplitude", "n_shear"}, where)
                sigmas.extend(constant_plus_shear_basis(
                    self.dim, amplitude=float(mode.get("amplitude", 0.25)),
                    n_shear=int(mode.get("n_shear", 2))).sigmas)
            elif kind == "constant":
                _reject_unknown(mode, {"kind", "direction"}, where)
                sigmas.append(constant_field(_require(mode, "direction", where)))
            elif kind == "shear":
                _reject_unknown(mode, {"kind", "wavevector", "direction", "amplitude", "phase"}, where)
                sigmas.append(shear_mode(_require(mode, "wavevector", where),
                                         _require(mode, "direction", where),
                                         float(mode.get("amplitude", 1.0)),
                                         float(mode.get("phase", 0.0))))
            else:
                raise InvalidConfig(f"unknown basis mode kind {kind!r} in {where}")
        if not sigmas:
            raise InvalidConfig("basis resolved to zero modes")
        return NoiseBasis(tuple(sigmas))

    def build_v(self, grid: Optional[GridSpec] = None):
        """None for zero drift; AnalyticField for smooth drifts; mollified
        GridField for the singular example."""
        spec_dict = self.v_spec
        kind = spec_dict.get("kind", "zero")
        where = "config.v"
        if kind == "zero":
            _reject_unknown(spec_dict, {"kind"}, where)
            return None
        if kind == "taylor_green":
            _reject_unknown(spec_dict, {"kind", "amplitude"}, where)
            return taylor_green(float(spec_dict.get("amplitude", 1.0)))
        if kind == "gaussian_vortex":
            _reject_unknown(spec_dict, {"kind", "center", "width", "amplitude"}, where)
            return gaussian_vortex(spec_dict.get("center", [0.0, 0.0]),
                                   float(spec_dict.get("width", 0.5)),
                                   float(spec_dict.get("amplitude", 1.0)))
        if kind == "singular":
            _reject_unknown(spec_dict, {"kind", "amplitude", "alpha", "mollify_eps"}, where)
            g = grid or self.grid()
            raw = singular_rotational(alpha=float(spec_dict.get("alpha", 1.5)),
                                      extent=self.extent,
                                      amplitude=float(spec_dict.get("amplitude", 1.0)))
            eps = float(spec_dict.get("mollify_eps", 4 * g.dx))
            return mollify(raw, Mollifier(eps), g)
        raise InvalidConfig(f"unknown v kind {kind!r} in {where}")

    def build_B0(self) -> AnalyticField:
        spec_dict = self.b0_spec
        kind = spec_dict.get("kind", "gaussian_vortex")
        where = "config.B0"
        if kind == "gaussian_vortex":
            _reject_unknown(spec_dict, {"kind", "center", "width", "amplitude"}, where)
            return gaussian_vortex(spec_dict.get("center", [0.0, 0.0]),
                                   float(spec_dict.get("width", 0.5)),
                                   float(spec_dict.get("amplitude", 1.0)),
                                   extent=self.extent)
        if kind == "gaussian_bump":
            _reject_unknown(spec_dict, {"kind", "center", "width", "amps"}, where)
            return gaussian_bump(self.dim, spec_dict.get("center", [0.0] * self.dim),
                                 float(spec_dict.get("width", 0.5)),
                                 spec_dict.get("amps", [1.0] + [0.0] * (self.dim - 1)),
                                 extent=self.extent)
        if kind == "taylor_green":
            _reject_unknown(spec_dict, {"kind", "amplitude"}, where)
            return taylor_green(float(spec_dict.get("amplitude", 1.0)))
        if kind == "constant":
            _reject_unknown(spec_dict, {"kind", "values"}, where)
            return constant_field(_require(spec_dict, "values", where))
        raise InvalidConfig(f"unknown B0 kind {kind!r} in {where}")

    def build_f(self) -> FSpec:
        spec_dict = self.f_spec
        where = "config.f"
        if not isinstance(spec_dict, dict):
            raise InvalidConfig(f"{where} must be an object")
        kind = spec_dict.get("kind", "zero")
        if kind == "zero":
            _reject_unknown(spec_dict, {"kind"}, where)
            return FSpec()
        if kind == "constant":
            _reject_unknown(spec_dict, {"kind", "values"}, where)
            return FSpec("constant", tuple(_require(spec_dict, "values", where)))
        if kind == "sign_flip":
            _reject_unknown(spec_dict, {"kind", "values", "flip_time"}, where)
            return FSpec("sign_flip", tuple(_require(spec_dict, "values", where)),
                         float(spec_dict.get("flip_time", self.T / 2)))
        raise InvalidConfig(f"unknown f kind {kind!r} in {where}")


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise InvalidConfig(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"config {path}: line {exc.lineno} column {exc.colno}: {exc.msg}")
    return ExperimentConfig.from_dict(raw, where=path)


def parse_f_spec(text: str, default_flip: float) -> dict:
    """CLI shorthand: 'zero', 'const:0.5[,0.3]', 'flip:0.5[,0.3][@t]'."""
    text = text.strip()
    if text == "zero":
        return {"kind": "zero"}
    if text.startswith("const:"):
        vals = [float(v) for v in text[6:].split(",") if v]
        return {"kind": "constant", "values": vals}
    if text.startswith("flip:"):
        body = text[5:]
        flip_t = default_flip
        if "@" in body:
            body, t_str = body.split("@", 1)
            flip_t = float(t_str)
        vals = [float(v) for v in body.split(",") if v]
        return {"kind": "sign_flip", "values": vals, "flip_time": flip_t}
    raise InvalidConfig(f"cannot parse f spec {text!r}")
