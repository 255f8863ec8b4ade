import json
import os

import pytest

from semibandit.cli import main


def test_sweep_writes_outputs(tmp_path, capsys):
    out = tmp_path / "o"
    rc = main(["sweep", "--algorithm", "oful", "--env", "linear_sphere", "--T", "100",
               "--d", "3", "--K", "3", "--replicates", "2", "--seed", "5", "--out", str(out)])
    assert rc == 0
    assert sorted(os.listdir(out)) == ["summary.json", "trace_oful_linear_sphere.csv"]
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["params"]) == 20 and summary["config"]["master_seed"] == 5


def test_run_single_cell_with_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"env": {"kind": "confounded_orthant", "d": 3, "K": 2},
                               "algorithm": {"name": "bose"}, "horizon": 80, "replicates": 2}))
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--param", "0.01", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert [p["param_value"] for p in summary["params"]] == [0.01]
    assert summary["potential_audit"] == {"runs": 2, "failures": 0}


def test_lowerbound_and_contract(tmp_path, capsys):
    assert main(["lowerbound", "--T", "100", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "lowerbound.json").read_text())
    assert rep["max_final_regret"] >= 50
    assert main(["lowerbound", "--algorithm", "bose", "--out", str(tmp_path)]) == 3
    assert "contract" in capsys.readouterr().err


def test_olsdemo(tmp_path):
    assert main(["olsdemo", "--T", "1000", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "olsdemo.json").read_text())
    assert rep["ridge_w"][1] < 0 < rep["bose_theta"][1]


@pytest.mark.parametrize("argv", [
    ["run", "--env", "nope"],
    ["run", "--T", "0"],
    ["run", "--config", "/nonexistent/c.json"],
])
def test_config_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "config" in capsys.readouterr().err


def test_bad_config_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["run", "--config", str(p)]) == 2


def test_output_error_exit_4(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    rc = main(["run", "--algorithm", "oful", "--T", "20", "--d", "2", "--K", "2",
               "--replicates", "1", "--out", str(blocker / "sub")])
    assert rc == 4


def test_diagnose_quick(tmp_path):
    assert main(["diagnose", "--quick", "--seed", "1", "--out", str(tmp_path)]) == 0
    names = os.listdir(tmp_path)
    assert "matrix_freedman.json" in names and "ols_bias_demo.json" in names
