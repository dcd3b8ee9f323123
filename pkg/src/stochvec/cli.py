"""Command-line orchestration: simulate, pde, duality, moments, verify-operator.

Every run writes exactly one ``manifest.json`` (fully-resolved config echo,
seed, package version, git describe of the working tree) next to its CSV
artifacts. Identical config+seed produce byte-identical CSVs. Exit codes:
0 success, 1 invalid configuration, 2 tolerance exceeded, 3 internal error.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config, parse_f_spec
from .duality import duality_check, moment_check, run_spde_ensemble
from .errors import InvalidConfig, StochvecError, TolExceeded
from .fields import GridField, sample
from .io import write_field_csv, write_json
from .lie import OperatorCoefficients
from .noise import generate_ensemble
from .parabolic import AdvectionData, pack_sym, run_V, run_moments
from .verify import operator_report

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stochvec",
                                     description="stochastic vector advection laboratory")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--force", action="store_true",
                       help="allow writing into a nonempty directory")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--jobs", type=int, default=None,
                       help="worker processes (default: config value)")

    p = sub.add_parser("simulate", help="sample SPDE solution fields")
    common(p)
    p.add_argument("--t", type=float, default=None, help="horizon (default config T)")
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--dt", type=float, default=None, help="flow step size")

    p = sub.add_parser("pde", help="run a parabolic solve")
    common(p)
    p.add_argument("--mode", choices=("V", "moments"), required=True)
    p.add_argument("--f", default=None, help="f spec: zero | const:a,b | flip:a,b@t")
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--checkpoints", default=None,
                   help="comma-separated times at which to dump fields")

    p = sub.add_parser("duality", help="Monte-Carlo vs PDE expectation check")
    common(p)
    p.add_argument("--f", default=None)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--tol", type=float, default=None,
                   help="override the discretization allowance")

    p = sub.add_parser("moments", help="Monte-Carlo vs moment-PDE check")
    common(p)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--tol", type=float, default=None)

    p = sub.add_parser("verify-operator", help="structural operator diagnostics")
    common(p)
    return parser


def _prepare_outdir(path: str, force: bool):
    os.makedirs(path, exist_ok=True)
    if os.listdir(path) and not force:
        raise InvalidConfig(f"output directory {path!r} is not empty; pass --force")


def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=10,
                             cwd=os.path.dirname(os.path.abspath(__file__)))
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def _write_manifest(outdir: str, subcommand: str, cfg: ExperimentConfig, extra: dict):
    manifest = {
        "subcommand": subcommand,
        "config": cfg.as_dict(),
        "seed": cfg.seed,
        "package_version": __version__,
        "git_describe": _git_describe(),
    }
    manifest.update(extra)
    write_json(manifest, os.path.join(outdir, "manifest.json"))


def _write_csv(path: str, header, rows):
    def fmt(x):
        if isinstance(x, float):
            return repr(x)
        return str(x)
    lines = [",".join(header)]
    lines += [",".join(fmt(x) for x in row) for row in rows]
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _load_with_overrides(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if getattr(args, "samples", None) is not None:
        cfg.samples = args.samples
    t = getattr(args, "t", None)
    if t is not None:
        dt_old = cfg.dt
        cfg.T = t
        cfg.steps = max(1, round(t / dt_old))
    dt = getattr(args, "dt", None)
    if dt is not None:
        cfg.steps = max(1, round(cfg.T / dt))
    f_text = getattr(args, "f", None)
    if f_text is not None:
        cfg.f_spec = parse_f_spec(f_text, cfg.T / 2)
    tol = getattr(args, "tol", None)
    if tol is not None:
        cfg.tolerances = {**cfg.tolerances,
                          "duality_allowance": tol, "moment_allowance": tol}
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_simulate(args) -> int:
    cfg = _load_with_overrides(args)
    _prepare_outdir(args.out, args.force)
    basis = cfg.build_basis()
    spec = cfg.grid()
    ens = generate_ensemble(basis.K, cfg.samples, cfg.T, cfg.steps, cfg.seed)
    est = run_spde_ensemble(cfg.build_B0(), cfg.build_v(spec), basis, ens, spec,
                            f=cfg.build_f(), want=("V",), jobs=cfg.effective_jobs,
                            tol_inv=cfg.tolerances["tol_inv"])
    mean = est.mean_V.with_values(est.mean_V.values, name="mean_field")
    write_field_csv(mean, os.path.join(args.out, "mean_field.csv"), seed=cfg.seed)
    write_field_csv(est.se_V, os.path.join(args.out, "mean_field_se.csv"), seed=cfg.seed)
    _write_csv(os.path.join(args.out, "samples.csv"),
               ["sample", "max_abs_det_minus_one", "max_roundtrip_residual",
                "flagged_nodes", "exponential"],
               est.diagnostics["per_sample"])
    tol_det = cfg.tolerances["tol_det"]
    det_violations = sum(1 for row in est.diagnostics["per_sample"] if row[1] > tol_det)
    _write_manifest(args.out, "simulate", cfg, {
        "diagnostics": {k: v for k, v in est.diagnostics.items() if k != "per_sample"},
        "det_tolerance_violations": det_violations,
    })
    return 0


def _cmd_pde(args) -> int:
    cfg = _load_with_overrides(args)
    _prepare_outdir(args.out, args.force)
    basis = cfg.build_basis()
    spec = cfg.grid()
    coeffs = OperatorCoefficients(basis)
    v = cfg.build_v(spec)
    checkpoints = []
    if args.checkpoints:
        checkpoints = sorted(float(x) for x in args.checkpoints.split(",") if x)
    pending = list(checkpoints)
    dumps = []

    def on_step(state):
        while pending and state.t >= pending[0] - 1e-12:
            dumps.append((pending.pop(0), state.field))

    dt_pde = cfg.tolerances.get("dt_pde")
    if args.mode == "V":
        V0 = sample(cfg.build_B0(), spec, name="V")
        adv = AdvectionData(spec, v=v, basis=basis, f=cfg.build_f().at)
        state = run_V(V0, coeffs, adv, cfg.T, dt=dt_pde, callback=on_step)
        final_name = "V_final"
    else:
        b0 = sample(cfg.build_B0(), spec)
        full0 = np.einsum("a...,b...->ab...", b0.values, b0.values)
        U0 = GridField(pack_sym(full0, spec.dim), spec.extent, name="u")
        state = run_moments(U0, basis, coeffs, cfg.T, v=v, dt=dt_pde, callback=on_step)
        final_name = "moments_final"
    for t_chk, fld in dumps:
        write_field_csv(fld.with_values(fld.values, name=f"checkpoint_t{t_chk:g}"),
                        os.path.join(args.out, f"checkpoint_t{t_chk:g}.csv"), seed=cfg.seed)
    write_field_csv(state.field.with_values(state.field.values, name=final_name),
                    os.path.join(args.out, final_name + ".csv"), seed=cfg.seed)
    _write_csv(os.path.join(args.out, "diagnostics.csv"),
               ["t", "l2_norm", "h1_seminorm"],
               [(t, float(np.sqrt(l2)), float(np.sqrt(h1))) for t, l2, h1 in state.history])
    _write_manifest(args.out, "pde", cfg, {"mode": args.mode})
    return 0


def _cmd_duality(args) -> int:
    cfg = _load_with_overrides(args)
    _prepare_outdir(args.out, args.force)
    basis = cfg.build_basis()
    spec = cfg.grid()
    ens = generate_ensemble(basis.K, cfg.samples, cfg.T, cfg.steps, cfg.seed)
    report = duality_check(cfg.build_B0(), cfg.build_v(spec), basis, cfg.build_f(),
                           cfg.T, ens, spec, allowance=cfg.tolerances["duality_allowance"],
                           jobs=cfg.effective_jobs, dt_pde=cfg.tolerances.get("dt_pde"),
                           tol_inv=cfg.tolerances["tol_inv"],
                           config_echo=cfg.as_dict(), raise_on_fail=False)
    _dump_comparison(args.out, cfg, report, "V_mc", "V_pde")
    _write_manifest(args.out, "duality", cfg, {"passed": report.passed})
    if not report.passed:
        print(f"duality: FAIL discrepancy={report.discrepancy:.4f} tol={report.tol:.4f}",
              file=sys.stderr)
        return 2
    print(f"duality: pass discrepancy={report.discrepancy:.4f} tol={report.tol:.4f}")
    return 0


def _cmd_moments(args) -> int:
    cfg = _load_with_overrides(args)
    _prepare_outdir(args.out, args.force)
    basis = cfg.build_basis()
    spec = cfg.grid()
    ens = generate_ensemble(basis.K, cfg.samples, cfg.T, cfg.steps, cfg.seed)
    report = moment_check(cfg.build_B0(), cfg.build_v(spec), basis, cfg.T, ens, spec,
                          allowance=cfg.tolerances["moment_allowance"], jobs=cfg.effective_jobs,
                          dt_pde=cfg.tolerances.get("dt_pde"),
                          config_echo=cfg.as_dict(), raise_on_fail=False)
    _dump_comparison(args.out, cfg, report, "u_mc", "u_pde")
    _write_manifest(args.out, "moments", cfg, {"passed": report.passed})
    if not report.passed:
        print(f"moments: FAIL discrepancy={report.discrepancy:.4f} tol={report.tol:.4f}",
              file=sys.stderr)
        return 2
    print(f"moments: pass discrepancy={report.discrepancy:.4f} tol={report.tol:.4f}")
    return 0


def _dump_comparison(outdir: str, cfg: ExperimentConfig, report, mc_name: str, pde_name: str):
    write_field_csv(report.v_mc.with_values(report.v_mc.values, name=mc_name),
                    os.path.join(outdir, f"{mc_name}.csv"), seed=cfg.seed)
    write_field_csv(report.v_pde.with_values(report.v_pde.values, name=pde_name),
                    os.path.join(outdir, f"{pde_name}.csv"), seed=cfg.seed)
    write_field_csv(report.se.with_values(report.se.values, name="se"),
                    os.path.join(outdir, "se.csv"), seed=cfg.seed)
    err = report.v_mc.with_values(np.abs(report.v_mc.values - report.v_pde.values),
                                  name="error_map")
    write_field_csv(err, os.path.join(outdir, "error_map.csv"), seed=cfg.seed)
    summary = report.summary()
    summary["diagnostics"] = {k: v for k, v in summary["diagnostics"].items()
                              if k != "per_sample"}
    write_json(summary, os.path.join(outdir, "report.json"))


def _cmd_verify_operator(args) -> int:
    cfg = _load_with_overrides(args)
    _prepare_outdir(args.out, args.force)
    basis = cfg.build_basis()
    report = operator_report(basis, cfg.grid(), seed=cfg.seed)
    write_json(report, os.path.join(args.out, "operator_report.json"))
    _write_manifest(args.out, "verify-operator", cfg, {"report": report})
    print("verify-operator: nu_est=%.6g C_est=%.6g bracket_err=%.3g adjoint_err=%.3g"
          % (report["nu_est"], report["C_est"], report["bracket_vs_coeff_max_err"],
             report["adjoint_duality_err"]))
    return 0


_HANDLERS = {
    "simulate": _cmd_simulate,
    "pde": _cmd_pde,
    "duality": _cmd_duality,
    "moments": _cmd_moments,
    "verify-operator": _cmd_verify_operator,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.subcommand](args)
    except InvalidConfig as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TolExceeded as exc:
        print(f"tolerance exceeded: {exc}", file=sys.stderr)
        return 2
    except StochvecError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
