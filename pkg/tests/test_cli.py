from __future__ import annotations

import json
import math

import numpy as np
import pytest
import yaml

from slvfx.cli import analytics_rows, main
from slvfx.config import build_params, load_config, parse_job
from slvfx.leverage import LeverageSurface

BASE = {
    "model": {
        "s0": 1.0,
        "variance": {"y0": 0.04, "kappa": 1.5, "theta": 0.04, "xi": 0.3},
        "domestic": {"y0": 0.02, "kappa": 0.5, "theta": 0.02, "xi": 0.05},
        "foreign": {"y0": 0.01, "kappa": 0.5, "theta": 0.01, "xi": 0.05},
        "correlation": {"sv": -0.5, "df": 0.3},
        "leverage": {"file": "surface.csv"},
    },
    "grid": {"maturity": 1.0, "steps_per_year": 12},
    "payoff": {"type": "european_call", "strike": 1.0},
    "simulation": {"n_paths": 4000, "seed": 3, "batch_size": 1000},
    "convergence": {"steps": [3, 6, 12]},
    "probe": {"process": "variance", "kind": "exp_integral", "lambda": 0.5, "steps": [4, 8]},
}


@pytest.fixture
def job_dir(tmp_path):
    surf = LeverageSurface(np.array([0.0, 1.0]), np.array([0.8, 1.0, 1.2]),
                           np.array([[1.1, 1.0, 0.95], [1.05, 1.0, 0.97]]))
    surf.save(tmp_path / "surface.csv")
    (tmp_path / "job.yaml").write_text(yaml.safe_dump(BASE), encoding="utf-8")
    return tmp_path


def write_job(path, **changes):
    data = json.loads(json.dumps(BASE))
    for key, value in changes.items():
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            node = node[p]
        node[parts[-1]] = value
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


def test_price_ok(job_dir, capsys):
    assert main(["price", "--config", str(job_dir / "job.yaml")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert list(out) == ["estimate", "std_error", "ci95", "n_paths", "steps_per_year", "seed"]
    assert out["n_paths"] == 4000 and out["seed"] == 3


def test_price_timing_flag(job_dir, capsys):
    assert main(["price", "--config", str(job_dir / "job.yaml"), "--timing"]) == 0
    assert "wall_time" in json.loads(capsys.readouterr().out)


@pytest.mark.parametrize("cmd", ["price", "converge", "moment-probe"])
def test_missing_surface(job_dir, capsys, cmd):
    cfg = write_job(job_dir / "bad.yaml", **{"model.leverage": {"file": "nope.csv"}})
    assert main([cmd, "--config", str(cfg)]) == 2
    assert "nope.csv" in capsys.readouterr().err


@pytest.mark.parametrize("cmd", ["price", "converge", "moment-probe"])
def test_non_psd(job_dir, capsys, cmd):
    cfg = write_job(job_dir / "bad.yaml", **{"model.correlation": {"sv": 0.99, "sd": 0.99, "vd": -0.99}})
    assert main([cmd, "--config", str(cfg)]) == 2
    assert "matrix not PSD" in capsys.readouterr().err


@pytest.mark.parametrize("cmd", ["price", "converge", "moment-probe"])
def test_bad_batch_size(job_dir, capsys, cmd):
    cfg = write_job(job_dir / "bad.yaml", **{"simulation.batch_size": 0})
    assert main([cmd, "--config", str(cfg)]) == 2


def test_missing_config(capsys):
    assert main(["price", "--config", "/no/such/job.yaml"]) == 2
    assert "/no/such/job.yaml" in capsys.readouterr().err


def test_unknown_key_rejected(job_dir, capsys):
    cfg = write_job(job_dir / "bad.yaml", **{"grid.stepz": 3})
    assert main(["price", "--config", str(cfg)]) == 2


def test_dump_config_roundtrip(job_dir, capsys):
    assert main(["price", "--config", str(job_dir / "job.yaml"), "--dump-config", "--seed", "77"]) == 0
    dumped = capsys.readouterr().out
    (job_dir / "dumped.yaml").write_text(dumped, encoding="utf-8")
    again, _ = load_config(job_dir / "dumped.yaml")
    first, _ = load_config(job_dir / "job.yaml", seed_override=77)
    assert again == first
    assert again.dump() == dumped


def test_seed_precedence(job_dir, monkeypatch):
    monkeypatch.setenv("SEED", "11")
    assert load_config(job_dir / "job.yaml")[0].simulation.seed == 11
    assert load_config(job_dir / "job.yaml", seed_override=5)[0].simulation.seed == 5


def test_config_builds_params(job_dir):
    job, base = load_config(job_dir / "job.yaml")
    p = build_params(job, base)
    assert p.leverage.sigma_max == 1.1
    assert p.corr.rho("s", "v") == -0.5


def test_converge_csv(job_dir, capsys):
    assert main(["converge", "--config", str(job_dir / "job.yaml")]) == 0
    out = capsys.readouterr().out
    lines = out.split("\n")
    assert lines[0] == "steps_per_year,estimate,std_error,difference,diff_std_error,order"
    assert len([ln for ln in lines if ln]) == 4
    assert "\r" not in out


def test_moment_probe_csv(job_dir, capsys):
    assert main(["moment-probe", "--config", str(job_dir / "job.yaml"), "--steps", "4,8,16"]) == 0
    lines = capsys.readouterr().out.strip().split("\n")
    assert lines[0] == "steps_per_year,estimate,std_error" and len(lines) == 4


def _analytics(capsys, *args):
    assert main(["analytics", *args]) == 0
    header, row = capsys.readouterr().out.strip().split("\n")
    return dict(zip(header.split(","), row.split(",")))


def test_analytics_tables(capsys):
    r = _analytics(capsys, "--k", "0.885", "--xi", "0.342", "--sigma-max", "1.6")
    assert float(r["t_star_L1"]) == pytest.approx(11.8, abs=0.1)
    r = _analytics(capsys, "--k", "0.978", "--xi", "0.499", "--sigma-max", "1.3")
    assert float(r["t_star_L1"]) == pytest.approx(9.3, abs=0.1)
    r = _analytics(capsys, "--k", "1.412", "--xi", "0.299", "--sigma-max", "1.399", "--theta", "0.04")
    assert float(r["t_star_L1"]) == pytest.approx(32.3, abs=0.1)
    assert r["feller"] == "true"
    r = _analytics(capsys, "--k", "1.412", "--xi", "0.299", "--sigma-max", "1.399", "--theta", "0.03")
    assert r["feller"] == "false"


def test_analytics_inf(capsys):
    r = _analytics(capsys, "--k", "5", "--xi", "0.1", "--sigma-max", "1.0")
    assert r["t_star_calibration"] == "inf"
    assert r["feller"] == "unknown"
    assert analytics_rows(1.0, 1.0, 0.3, 0.0).count("inf") == 6


def _write_csv(path, cols):
    names = list(cols)
    rows = zip(*cols.values())
    path.write_text(",".join(names) + "\n" + "\n".join(",".join(repr(float(v)) for v in r) for r in rows) + "\n")
    return path


def test_leverage_constant_v(tmp_path, capsys):
    rng = np.random.default_rng(0)
    n = 5000
    cloud = _write_csv(tmp_path / "cloud.csv", {"S": rng.lognormal(0, 0.2, n), "v": np.full(n, 0.04)})
    lv = _write_csv(tmp_path / "lv.csv", {"K": [0.9, 1.0, 1.1], "sigma_lv": [0.22, 0.2, 0.19]})
    assert main(["leverage", "--cloud", str(cloud), "--sigma-lv", str(lv)]) == 0
    lines = capsys.readouterr().out.strip().split("\n")
    assert lines[0] == "strike,sigma_det"
    vals = [float(ln.split(",")[1]) for ln in lines[1:]]
    assert vals == pytest.approx([0.22 / 0.2, 1.0, 0.19 / 0.2], rel=1e-12)


def test_leverage_full_collapses(tmp_path, capsys):
    rng = np.random.default_rng(1)
    n = 5000
    cloud = _write_csv(tmp_path / "cloud.csv", {
        "S": rng.lognormal(0, 0.2, n), "v": rng.gamma(4, 0.01, n),
        "D": np.full(n, 0.98), "rd": np.full(n, 0.02), "rf": np.full(n, 0.01)})
    lv = _write_csv(tmp_path / "lv.csv", {"K": [0.9, 1.1], "sigma_lv": [0.2, 0.2], "fwd_d": [0.02, 0.02],
                                          "fwd_f": [0.01, 0.01], "d2c_dk2": [2.0, 2.0]})
    assert main(["leverage", "--cloud", str(cloud), "--sigma-lv", str(lv), "--strikes", "0.95,1.0"]) == 0
    lines = capsys.readouterr().out.strip().split("\n")
    assert lines[0] == "strike,sigma_det,sigma2_full"
    for ln in lines[1:]:
        _, det, full = map(float, ln.split(","))
        assert full == pytest.approx(det * det, rel=1e-12)


def test_leverage_insufficient_is_runtime(tmp_path, capsys):
    cloud = _write_csv(tmp_path / "cloud.csv", {"S": [1.0, 1.1, 0.9], "v": [0.04] * 3})
    lv = _write_csv(tmp_path / "lv.csv", {"K": [1.0], "sigma_lv": [0.2]})
    assert main(["leverage", "--cloud", str(cloud), "--sigma-lv", str(lv)]) == 3
    assert "insufficient particles in bin" in capsys.readouterr().err


def test_out_file_is_utf8_lf(job_dir):
    out = job_dir / "res.json"
    assert main(["price", "--config", str(job_dir / "job.yaml"), "--out", str(out)]) == 0
    raw = out.read_bytes()
    raw.decode("utf-8")
    assert b"\r" not in raw and raw.endswith(b"\n")


def test_parse_job_rejects_two_leverage_sources():
    data = json.loads(json.dumps(BASE))
    data["model"]["leverage"] = {"file": "a.csv", "constant": 1.0}
    with pytest.raises(ValueError):
        parse_job(data)
