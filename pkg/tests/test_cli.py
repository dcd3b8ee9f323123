import json
import os

import pytest

from stochvec.cli import main
from stochvec.config import load_config, parse_f_spec
from stochvec.errors import InvalidConfig


def write_config(path, **overrides):
    cfg = {
        "dim": 2,
        "extent": 3.141592653589793,
        "n": 24,
        "T": 0.1,
        "steps": 8,
        "seed": 1234,
        "samples": 12,
        "basis": [{"kind": "constant_basis"}],
        "v": {"kind": "zero"},
        "B0": {"kind": "gaussian_vortex", "center": [0.0, 0.0], "width": 0.5,
               "amplitude": 1.0},
        "f": {"kind": "zero"},
    }
    cfg.update(overrides)
    with open(path, "w") as fh:
        json.dump(cfg, fh)
    return path


# -- config validation -------------------------------------------------------

def test_unknown_key_is_field_precise(tmp_path):
    path = write_config(tmp_path / "c.json", typo_key=1)
    with pytest.raises(InvalidConfig) as err:
        load_config(str(path))
    assert "typo_key" in str(err.value)


def test_malformed_json_reports_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "dim": 2,\n  "n": oops\n}\n')
    with pytest.raises(InvalidConfig) as err:
        load_config(str(path))
    assert "line 3" in str(err.value)


def test_nested_unknown_key(tmp_path):
    path = write_config(tmp_path / "c.json",
                        B0={"kind": "gaussian_vortex", "girth": 2})
    with pytest.raises(InvalidConfig) as err:
        load_config(str(path))
    assert "girth" in str(err.value)


def test_env_seed_override(tmp_path, monkeypatch):
    path = write_config(tmp_path / "c.json")
    monkeypatch.setenv("STOCHVEC_SEED", "777")
    cfg = load_config(str(path))
    assert cfg.seed == 777
    monkeypatch.setenv("STOCHVEC_SEED", "not-an-int")
    with pytest.raises(InvalidConfig):
        load_config(str(path))


def test_parse_f_spec_forms():
    assert parse_f_spec("zero", 0.5) == {"kind": "zero"}
    assert parse_f_spec("const:0.5,0.3", 0.5) == {"kind": "constant", "values": [0.5, 0.3]}
    flip = parse_f_spec("flip:0.4@0.2", 0.5)
    assert flip == {"kind": "sign_flip", "values": [0.4], "flip_time": 0.2}
    assert parse_f_spec("flip:0.4", 0.25)["flip_time"] == 0.25
    with pytest.raises(InvalidConfig):
        parse_f_spec("nonsense", 0.5)


def test_config_builders_roundtrip(tmp_path):
    path = write_config(tmp_path / "c.json",
                        basis=[{"kind": "constant_plus_shear", "amplitude": 0.3}],
                        v={"kind": "taylor_green", "amplitude": 0.4},
                        f={"kind": "constant", "values": [0.5]})
    cfg = load_config(str(path))
    basis = cfg.build_basis()
    assert basis.K == 4
    assert cfg.build_v() is not None
    assert cfg.build_f().n_modes == 1
    assert cfg.as_dict()["basis"][0]["kind"] == "constant_plus_shear"


# -- subcommands ---------------------------------------------------------------

def test_malformed_config_exit_code(tmp_path, capsys):
    path = write_config(tmp_path / "c.json", bogus=3)
    rc = main(["simulate", "--config", str(path), "--out", str(tmp_path / "out")])
    assert rc == 1
    assert "bogus" in capsys.readouterr().err


def test_simulate_outputs_and_determinism(tmp_path):
    cfg = write_config(tmp_path / "c.json")
    out1, out2 = str(tmp_path / "r1"), str(tmp_path / "r2")
    assert main(["simulate", "--config", str(cfg), "--out", out1]) == 0
    assert main(["simulate", "--config", str(cfg), "--out", out2]) == 0
    for name in ("mean_field.csv", "mean_field_se.csv", "samples.csv", "manifest.json"):
        assert os.path.exists(os.path.join(out1, name))
    for name in ("mean_field.csv", "mean_field_se.csv", "samples.csv"):
        a = open(os.path.join(out1, name), "rb").read()
        b = open(os.path.join(out2, name), "rb").read()
        assert a == b, name


def test_out_dir_requires_force(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json")
    out = str(tmp_path / "r")
    assert main(["simulate", "--config", str(cfg), "--out", out]) == 0
    assert main(["simulate", "--config", str(cfg), "--out", out]) == 1
    assert main(["simulate", "--config", str(cfg), "--out", out, "--force"]) == 0


def test_manifest_contains_resolved_config(tmp_path):
    cfg = write_config(tmp_path / "c.json")
    out = str(tmp_path / "r")
    main(["simulate", "--config", str(cfg), "--out", out, "--seed", "999"])
    manifest = json.load(open(os.path.join(out, "manifest.json")))
    assert manifest["seed"] == 999
    assert manifest["config"]["n"] == 24
    assert manifest["subcommand"] == "simulate"


def test_pde_heat_diagnostics_decay(tmp_path):
    cfg = write_config(tmp_path / "c.json", n=32, T=0.2)
    out = str(tmp_path / "p")
    assert main(["pde", "--config", str(cfg), "--mode", "V", "--out", out]) == 0
    rows = [line.split(",") for line in
            open(os.path.join(out, "diagnostics.csv")).read().splitlines()[1:]]
    l2 = [float(r[1]) for r in rows]
    assert l2[-1] < l2[0]
    assert os.path.exists(os.path.join(out, "V_final.csv"))


def test_pde_moments_mode(tmp_path):
    cfg = write_config(tmp_path / "c.json", n=24, T=0.05)
    out = str(tmp_path / "m")
    assert main(["pde", "--config", str(cfg), "--mode", "moments", "--out", out]) == 0
    from stochvec.io import read_field_csv
    fld = read_field_csv(os.path.join(out, "moments_final.csv"))
    assert fld.ncomp == 3


def test_pde_checkpoints(tmp_path):
    cfg = write_config(tmp_path / "c.json", n=24, T=0.1)
    out = str(tmp_path / "ck")
    assert main(["pde", "--config", str(cfg), "--mode", "V", "--out", out,
                 "--checkpoints", "0.05"]) == 0
    assert os.path.exists(os.path.join(out, "checkpoint_t0.05.csv"))


def test_duality_pass_and_fail_exit_codes(tmp_path):
    cfg = write_config(tmp_path / "c.json", samples=200, n=24, T=0.1, steps=8)
    out = str(tmp_path / "d")
    assert main(["duality", "--config", str(cfg), "--out", out]) == 0
    report = json.load(open(os.path.join(out, "report.json")))
    assert report["passed"] is True
    for name in ("V_mc.csv", "V_pde.csv", "se.csv", "error_map.csv"):
        assert os.path.exists(os.path.join(out, name))
    out_fail = str(tmp_path / "dfail")
    assert main(["duality", "--config", str(cfg), "--out", out_fail,
                 "--tol", "-1.0"]) == 2


def test_moments_subcommand(tmp_path):
    cfg = write_config(tmp_path / "c.json", samples=200, n=24, T=0.1, steps=8)
    out = str(tmp_path / "mm")
    assert main(["moments", "--config", str(cfg), "--out", out]) == 0
    report = json.load(open(os.path.join(out, "report.json")))
    assert report["passed"] is True


def test_verify_operator_constant_basis(tmp_path):
    cfg = write_config(tmp_path / "c.json", n=32)
    out = str(tmp_path / "v")
    assert main(["verify-operator", "--config", str(cfg), "--out", out]) == 0
    report = json.load(open(os.path.join(out, "operator_report.json")))
    assert report["nu_est"] == pytest.approx(1.0)
    assert report["bracket_vs_coeff_max_err"] < 1e-8
    assert report["adjoint_duality_err"] < 1e-6
    assert report["ellipticity_pass"] is True


def test_console_entry_point(tmp_path):
    import subprocess
    import sys
    cfg = write_config(tmp_path / "c.json")
    proc = subprocess.run([sys.executable, "-m", "stochvec.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "simulate" in proc.stdout
