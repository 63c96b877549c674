import csv
import json

import pytest

from pnn.cli import TEST_FILE, TRAIN_FILE, TRUTH_FILE, main


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def simdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    assert run("simulate", "--design", 1, "--n-train", 12, "--n-test", 200, "--p", 0.5, "--seed", 7, "--out-dir", d) == 0
    return d


@pytest.fixture(scope="module")
def model(simdir):
    m = simdir / "model.json"
    rc = run("--threads", 1, "train", "--data", simdir / TRAIN_FILE, "--width", 1, "--lambda", 0.01,
             "--time-limit", 10, "--model-out", m, "--report-out", simdir / "report.json")
    assert rc == 0
    return m


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_simulate_files_and_determinism(tmp_path, simdir):
    for name in (TRAIN_FILE, TEST_FILE, TRUTH_FILE):
        assert (simdir / name).exists()
    assert len(_rows(simdir / TEST_FILE)) == 200
    again = tmp_path / "again"
    assert run("simulate", "--design", 1, "--n-train", 12, "--n-test", 200, "--p", 0.5, "--seed", 7, "--out-dir", again) == 0
    for name in (TRAIN_FILE, TEST_FILE, TRUTH_FILE):
        assert (again / name).read_bytes() == (simdir / name).read_bytes()


def test_usage_errors(tmp_path, capsys):
    assert run("simulate", "--p", 1.5, "--out-dir", tmp_path) == 2
    err = capsys.readouterr().err
    assert err.startswith("pnn: usage error") and err.count("\n") == 1
    assert run("train", "--data", tmp_path / "nope.csv", "--model-out", tmp_path / "m.json") == 2
    assert run("tune", "--data", tmp_path / "nope.csv", "--folds", 1, "--out", tmp_path / "t.csv") == 2
    assert run("simulate", "--design", 4, "--out-dir", tmp_path) == 2
    assert run() == 2


def test_train_report(model, simdir):
    rep = json.loads((simdir / "report.json").read_text())
    for key in ("variables", "binaries", "constraints", "runtime_s", "status", "objective", "gap"):
        assert key in rep
    m = json.loads(model.read_text())
    assert m["architecture"]["width"] == 1 and m["architecture"]["hidden_layers"] == 1


def test_mps_only(tmp_path, simdir):
    p = tmp_path / "m.mps"
    assert run("train", "--data", simdir / TRAIN_FILE, "--solver", "mps-only", "--mps-out", p) == 0
    assert p.read_text().rstrip().endswith("ENDATA")
    assert not (tmp_path / "m.json").exists()
    assert run("train", "--data", simdir / TRAIN_FILE, "--solver", "mps-only") == 2


def test_evaluate_with_truth(model, simdir, tmp_path):
    out, res = tmp_path / "e.csv", tmp_path / "r.csv"
    rc = run("evaluate", "--model", model, "--data", simdir / TEST_FILE, "--truth", simdir / TRUTH_FILE,
             "--train-data", simdir / TRAIN_FILE, "--out", out, "--results", res)
    assert rc == 0
    row = _rows(out)[0]
    assert 0 <= float(row["oosp"]) <= 100
    for col in ("pi_ipw", "pi_dm", "pi_dr", "pi_dr_lo", "pi_dr_hi", "oosp_lo"):
        assert row[col] != ""
    metrics = {r["metric"] for r in _rows(res)}
    assert metrics == {"oosp", "pi_ipw", "pi_dm", "pi_dr"}


def test_evaluate_without_truth_and_pairs(model, simdir, tmp_path, capsys):
    out = tmp_path / "e.csv"
    rc = run("evaluate", "--model", model, model, "--data", simdir / TEST_FILE, "--out", out)
    assert rc == 0
    rows = _rows(out)
    assert "oosp" not in rows[0] and rows[0]["pi_dr"] != ""
    assert len(rows) == 3 and rows[2]["p_value"] == "1.0"
    assert "warning" in capsys.readouterr().err


def test_evaluate_feature_mismatch(model, tmp_path, capsys):
    assert run("simulate", "--design", 2, "--n-train", 5, "--n-test", 5, "--out-dir", tmp_path) == 0
    assert run("evaluate", "--model", model, "--data", tmp_path / TEST_FILE) == 1
    assert "features" in capsys.readouterr().err


def test_config_file_and_tune(simdir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"width": 1, "time-limit": 2, "lambda": 0.5}))
    out, best = tmp_path / "t.csv", tmp_path / "best.json"
    rc = run("--config", cfg, "tune", "--data", simdir / TRAIN_FILE, "--grid", "0,10", "--folds", 2, "--out", out, "--best-out", best)
    assert rc == 0
    assert len(_rows(out)) == 4
    b = json.loads(best.read_text())
    assert b["best_lambda"] in (0.0, 10.0)
    rc = run("--config", cfg, "tune", "--data", simdir / TRAIN_FILE, "--grid", "0,10", "--folds", 2, "--out", tmp_path / "t2.csv", "--best-out", tmp_path / "b2.json")
    assert rc == 0 and (tmp_path / "t2.csv").read_text().splitlines()[1:] != []
    assert json.loads((tmp_path / "b2.json").read_text()) == b
