import csv
import json

import numpy as np
import pytest

from periodica.cli import main
from periodica.pipeline import ConfigError, RunConfig, log2_slope, steps_from_dt


def _write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


SMALL = {"problem": "linear", "params": {}, "n_paths": 256, "steps_per_period": 128, "n_samples": 2000}


def test_run_config_validation():
    with pytest.raises(ConfigError):
        RunConfig(problem="nope")
    with pytest.raises(ConfigError):
        RunConfig(n_paths=0)
    with pytest.raises(ConfigError):
        RunConfig(beta_drift_sign="up")
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"problem": "ou", "bogus": 1})
    cfg = RunConfig.from_dict({"problem": "ou", "dt": 1 / 256, "theta": 1.0})
    assert cfg.steps_per_period == 256 and cfg.theta == 1.0


def test_steps_from_dt():
    assert steps_from_dt(2.0, 0.5) == 4
    with pytest.raises(ConfigError):
        steps_from_dt(1.0, 0.3)
    with pytest.raises(ConfigError):
        steps_from_dt(1.0, -0.1)


def test_check_exit_codes(tmp_path, capsys):
    assert main(["check", "--config", _write(tmp_path, {"problem": "example51", "params": {},
                                                        "n_samples": 5000})]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["payload"]["hypothesis"]["margin"] > 0
    assert "timestamp" in report["meta"]
    bad = _write(tmp_path, {"problem": "example51", "params": {"c": 0.1}, "n_samples": 5000}, "bad.json")
    assert main(["check", "--config", bad]) == 1
    capsys.readouterr()


@pytest.mark.parametrize("doc", [
    "{not json",
    json.dumps({"problem": "nope"}),
    json.dumps({"problem": "example51", "params": {"zzz": 1}}),
    json.dumps({"problem": "example52", "params": {"A": [["2", "1"], ["1", "2"]]}}),
    json.dumps({"problem": "expr", "params": {"drift": ["x +"], "diffusion": [["0"]],
                                              "alpha": ["-1"], "beta": ["1"]}}),
])
def test_malformed_config_exit_2(tmp_path, doc, capsys):
    path = tmp_path / "m.json"
    path.write_text(doc)
    assert main(["check", "--config", str(path)]) == 2
    assert "error" in capsys.readouterr().err


def test_usage_errors_exit_2(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["solve", "--beta-drift-sign", "sideways"])
    assert info.value.code == 2
    assert main(["check"]) == 2
    assert main(["solve", "--config", _write(tmp_path, SMALL), "--dt", "0.3"]) == 2


def test_solve_outputs_and_determinism(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["solve", "--config", cfg, "--seed", "7", "--out", str(out1)]) == 0
    assert main(["solve", "--config", cfg, "--seed", "7", "--out", str(out2)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert json.loads(lines[0])["iteration"] == 1
    for name in ("trajectories.csv", "measures_t0.csv", "measures_theta.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    r1, r2 = (json.loads((o / "report.json").read_text()) for o in (out1, out2))
    assert r1["payload"] == r2["payload"]
    with open(out1 / "trajectories.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["path", "t", "x_1"]
    assert len(rows) == 1 + 64 * (4 * 128 + 1)
    assert (out1 / "measures_t0.csv").read_text().splitlines()[0] == "x_1"
    assert r1["payload"]["config"]["seed"] == 7


def test_different_seed_changes_payload(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL)
    main(["solve", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "a")])
    main(["solve", "--config", cfg, "--seed", "2", "--out", str(tmp_path / "b")])
    capsys.readouterr()
    ra, rb = (json.loads((tmp_path / o / "report.json").read_text())["payload"] for o in "ab")
    assert ra["periodicity"] != rb["periodicity"]


def test_ou_solve_has_oracle_block(tmp_path, capsys):
    doc = {"problem": "ou", "params": {}, "n_paths": 1024, "steps_per_period": 128, "n_samples": 2000}
    assert main(["solve", "--config", _write(tmp_path, doc), "--out", str(tmp_path / "o")]) == 0
    capsys.readouterr()
    block = json.loads((tmp_path / "o" / "report.json").read_text())["payload"]["oracle_comparison"]
    assert len(block["rows"]) == 16
    assert block["w1_max"] <= block["w1_threshold"]


def test_order_breakdown_exit_1(tmp_path, capsys):
    doc = {"problem": "example52", "params": {}, "n_paths": 256, "steps_per_period": 64, "n_samples": 2000,
           "n_outer_max": 2}
    code = main(["solve", "--config", _write(tmp_path, doc), "--order-breakdown", "1e-6",
                 "--out", str(tmp_path / "e")])
    assert code == 1
    capsys.readouterr()
    payload = json.loads((tmp_path / "e" / "report.json").read_text())["payload"]
    assert payload["error"]["type"] == "OrderBreakdownError"


def test_refine_deterministic_problem(tmp_path, capsys):
    doc = {"problem": "linear", "params": {"sigma": 0.0}, "n_paths": 64, "n_samples": 2000}
    assert main(["refine", "--config", _write(tmp_path, doc), "--out", str(tmp_path / "r")]) == 0
    out = capsys.readouterr().out
    rows = list(csv.DictReader(out.splitlines()))
    assert list(rows[0]) == ["dt", "violation_fraction", "strong_error", "contraction_ratio"]
    assert [float(r["dt"]) for r in rows] == [1 / 64, 1 / 128, 1 / 256, 1 / 512, 1 / 1024]
    assert all(float(r["violation_fraction"]) == 0.0 for r in rows)
    errs = [float(r["strong_error"]) for r in rows]
    assert abs(log2_slope([float(r["dt"]) for r in rows], errs) - 0.5) <= 0.15
    assert (tmp_path / "r" / "refine.csv").read_text() == out
