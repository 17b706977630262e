import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from randgas import __version__
from randgas.cli import main
from randgas.dynamics import SimConfig
from randgas.io import read_table
from randgas.moments import IDENTITIES, HydroPoint


def write_cfg(path, cfg):
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


def small_sim(lam=1.0, **extra):
    sim = {"K": 40, "volume_fraction": 0.02, "sigma": 1.0, "alpha": 0.1, "lambda": lam,
           "theta": 1.0, "t_end": 3.0, "ensemble_size": 2}
    return {"seed": 7, "simulation": sim, "snapshot_interval": 1.0, **extra}


def manifest(d):
    return json.loads((d / "manifest.json").read_text())


def test_missing_config_exit_2(tmp_path, capsys):
    rc = main(["simulate", "--config", str(tmp_path / "nope.yaml"), "--output", str(tmp_path / "o")])
    assert rc == 2
    assert "nope.yaml" in capsys.readouterr().err


def test_bad_flag_exit_2():
    assert main(["simulate", "--frobnicate"]) == 2
    assert main(["hydro", "--preset", "not-a-preset"]) == 2


def test_simulate_deterministic_and_manifest(tmp_path):
    cfg = write_cfg(tmp_path / "sim.yaml", small_sim())
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", cfg, "--output", str(a), "--threads", "1"]) == 0
    assert main(["simulate", "--config", cfg, "--output", str(b), "--threads", "2"]) == 0
    ma, mb = manifest(a), manifest(b)
    assert ma["files"] == mb["files"]
    assert {"simulation.json", "snapshots_r0000.csv", "events_r0001.csv", "runs.jsonl"} <= set(ma["files"])
    for name in ma["files"]:
        assert (a / name).is_file()
    assert ma["seed"] == 7 and ma["command"] == "simulate"
    head = (a / "snapshots_r0000.csv").read_text().splitlines()[:2]
    assert head[0] == f"# randgas {__version__}"
    assert head[1] == f"# config-sha256 {ma['config_sha256']}"
    # a different seed gives different trajectories
    c = tmp_path / "c"
    assert main(["simulate", "--config", cfg, "--output", str(c), "--seed", "8"]) == 0
    assert manifest(c)["files"]["events_r0000.csv"] != ma["files"]["events_r0000.csv"]


def test_lambda_zero_has_empty_event_log(tmp_path):
    cfg = write_cfg(tmp_path / "sim.yaml", small_sim(lam=0.0))
    out = tmp_path / "o"
    assert main(["simulate", "--config", cfg, "--output", str(out)]) == 0
    cols, ev = read_table(out / "events_r0000.csv")
    assert cols == ["t", "i", "j", "nx", "ny", "nz"] and ev.shape[0] == 0


def test_analyze_outputs_and_lambda_zero_overlap(tmp_path):
    sim = small_sim(lam=0.0)
    sim["simulation"].update(K=200, volume_fraction=0.05, t_end=10.0, ensemble_size=1)
    cfg = write_cfg(tmp_path / "sim.yaml", sim)
    snaps = tmp_path / "snaps"
    assert main(["simulate", "--config", cfg, "--output", str(snaps)]) == 0
    acfg = write_cfg(tmp_path / "an.yaml", {"burn_in": 1.0, "kl_window": 5.0, "n_blocks": 5})
    out = tmp_path / "an"
    assert main(["analyze", str(snaps), "--config", acfg, "--output", str(out)]) == 0
    ov = json.loads((out / "overlap.json").read_text())
    assert ov["ci_low"] <= 1.0 <= ov["ci_high"] and ov["contains_expected"]
    assert ov["n_snapshots"] == 10
    cols, g = read_table(out / "pair_correlation.csv")
    assert cols == ["r", "g", "stderr"] and len(g) == 64
    for name in ("maxwellian.csv", "kl_windows.csv"):
        assert name in manifest(out)["files"]


def test_analyze_empty_dir_exit_2(tmp_path):
    (tmp_path / "empty").mkdir()
    assert main(["analyze", str(tmp_path / "empty"), "--output", str(tmp_path / "o")]) == 2
    assert main(["analyze", str(tmp_path / "missing"), "--output", str(tmp_path / "o")]) == 2


def zero_gradient_point():
    return {"rho": 1.0, "u": [0.1, -0.2, 0.3], "theta": 1.2, "grad_u": np.zeros((3, 3)).tolist(),
            "grad_theta": [0, 0, 0], "grad_rho": [0, 0, 0], "rho_sp": 2.0}


def test_verify_moments_zero_gradient_passes(tmp_path):
    cfg = write_cfg(tmp_path / "m.yaml", {"n_samples": 20000, "point_seeds": [], "points": [zero_gradient_point()]})
    out = tmp_path / "o"
    assert main(["verify-moments", "--config", cfg, "--output", str(out)]) == 0
    lines = [ln for ln in (out / "moment_reports.jsonl").read_text().splitlines() if not ln.startswith("#")]
    reps = [json.loads(ln) for ln in lines]
    assert len(reps) == 8 and all(r["passed"] for r in reps)
    assert manifest(out)["status"] == "pass"


def test_verify_moments_corrupted_closed_form_fails(tmp_path):
    cfg = write_cfg(tmp_path / "m.yaml", {"n_samples": 50000, "point_seeds": [0],
                                          "test_mode": {"corrupt_closed_form": 1.1}})
    out = tmp_path / "o"
    assert main(["verify-moments", "--config", cfg, "--output", str(out)]) == 1
    assert manifest(out)["status"] == "fail"


def test_verify_moments_bad_identity_exit_2(tmp_path):
    cfg = write_cfg(tmp_path / "m.yaml", {"n_samples": 1000, "identities": ["MI-99"]})
    assert main(["verify-moments", "--config", cfg, "--output", str(tmp_path / "o")]) == 2


def test_hydro_uniform_is_unchanged(tmp_path):
    out = tmp_path / "o"
    assert main(["hydro", "--preset", "uniform", "--output", str(out)]) == 0
    _, a = read_table(out / "snapshot_000.csv")
    _, b = read_table(out / "snapshot_001.csv")
    assert np.allclose(a, b, rtol=0, atol=1e-14)


def test_hydro_sod_dilute_reports_l1(tmp_path):
    out = tmp_path / "o"
    assert main(["hydro", "--preset", "sod-dilute", "--output", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["n_cells"] == 800 and summary["l1_rho"] < 0.02
    assert summary["config_sha256"] == manifest(out)["config_sha256"]


def test_hydro_table_input(tmp_path):
    n = 50
    x = (np.arange(n) + 0.5) / n
    tab = tmp_path / "init.csv"
    tab.write_text("rho,u,theta\n" + "\n".join(f"{1 + 0.1 * np.sin(2 * np.pi * v)},0,1" for v in x) + "\n")
    cfg = write_cfg(tmp_path / "h.yaml", {"table": str(tab), "t_end": 0.05, "output_times": [0.02, 0.05]})
    out = tmp_path / "o"
    assert main(["hydro", "--config", cfg, "--output", str(out)]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["time"] == pytest.approx(0.05)
    assert s["totals_final"][0] == pytest.approx(s["totals_initial"][0], rel=1e-12)
    assert (out / "snapshot_002.csv").is_file()
    bad = write_cfg(tmp_path / "bad.yaml", {"t_end": 0.1})
    assert main(["hydro", "--config", bad, "--output", str(out)]) == 2


CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_example_configs_are_valid(tmp_path):
    sim = yaml.safe_load((CONFIGS / "simulate.yaml").read_text())
    sc = SimConfig.from_dict(sim["simulation"])
    assert sc.K == 500 and sc.velocity_init == "two_speed"
    an = yaml.safe_load((CONFIGS / "analyze.yaml").read_text())
    assert an["burn_in"] < sc.t_end
    mom = yaml.safe_load((CONFIGS / "verify-moments.yaml").read_text())
    assert set(mom["identities"]) == set(IDENTITIES)
    HydroPoint.from_dict(mom["points"][0])
    hy = yaml.safe_load((CONFIGS / "hydro.yaml").read_text())
    hy.update(n_cells=100, output_times=[0.05], t_end=0.05, output=str(tmp_path / "o"))
    cfg = write_cfg(tmp_path / "h.yaml", hy)
    assert main(["hydro", "--config", cfg]) == 0
    hy["limiter"] = "none"
    cfg = write_cfg(tmp_path / "h.yaml", hy)
    assert main(["hydro", "--config", cfg]) == 0
