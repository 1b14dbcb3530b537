import json

import numpy as np
import pytest

from mmdhd import cli, theory
from mmdhd.dataio import load_samples, save_samples


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def samples(tmp_path):
    rng = np.random.default_rng(0)
    x, y = tmp_path / "x.csv", tmp_path / "y.csv"
    save_samples(x, rng.normal(size=(40, 6)) + 0.6)
    save_samples(y, rng.normal(size=(40, 6)))
    return str(x), str(y)


def _strip_time(text):
    doc = json.loads(text)
    doc.pop("timestamp")
    return doc


def test_test_command(capsys, samples):
    code, out, _ = run(capsys, "test", "--x", samples[0], "--y", samples[1], "--alpha", "0.05",
                       "--bandwidth", "median")
    assert code == 0
    doc = json.loads(out)
    assert doc["reject"] == (doc["statistic"] > doc["z_alpha"])
    assert doc["seed"] == 0 and "timestamp" in doc
    code, out, _ = run(capsys, "test", "--x", samples[0], "--y", samples[1], "--kernel", "linear",
                       "--bandwidth", "1")
    assert code == 0 and json.loads(out)["gamma_used"] is None


def test_predict_command(capsys):
    code, out, _ = run(capsys, "predict", "--n", "50", "--d", "100", "--sigma", "1",
                       "--delta-norm", "2.5", "--alpha", "0.05")
    assert code == 0
    assert json.loads(out)["beta"] == pytest.approx(0.4486, abs=1e-4)


def test_usage_errors(capsys):
    assert run(capsys, "predict", "--n", "50", "--bogus")[0] == 1
    assert run(capsys, "frobnicate")[0] == 1
    assert run(capsys)[0] == 1
    code, _, err = run(capsys, "predict", "--n", "5", "--d", "4", "--delta-norm", "1",
                       "--alpha", "2")
    assert code == 1 and "alpha" in err


def test_data_errors(capsys, tmp_path, samples):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3\n")
    code, _, err = run(capsys, "test", "--x", str(bad), "--y", samples[1])
    assert code == 2 and "line 2" in err
    assert run(capsys, "test", "--x", str(tmp_path / "missing.csv"), "--y", samples[1])[0] == 2
    cfg = tmp_path / "c.json"
    cfg.write_text('{"d_grd": [1]}')
    assert run(capsys, "sweep", "--config", str(cfg))[0] == 2


def test_verify_exit_codes(capsys, monkeypatch):
    code, out, _ = run(capsys, "verify", "--suite", "cq-identity")
    assert code == 0 and json.loads(out)["passed"]
    real = theory.double_integral_expansion
    monkeypatch.setattr(theory, "double_integral_expansion",
                        lambda *a: real(*a) * (1 + 1e-3))
    code, out, _ = run(capsys, "verify", "--suite", "appendix-integrals")
    assert code == 3
    assert json.loads(out)["suites"][0]["n_failed"] > 0


def test_seed_echo_and_env(capsys, monkeypatch):
    monkeypatch.setenv("MMDHD_SEED", "77")
    _, out, _ = run(capsys, "predict", "--n", "5", "--d", "4", "--delta-norm", "1")
    assert json.loads(out)["seed"] == 77
    _, out, _ = run(capsys, "predict", "--n", "5", "--d", "4", "--delta-norm", "1", "--seed", "3")
    assert json.loads(out)["seed"] == 3
    monkeypatch.delenv("MMDHD_SEED")
    _, out, _ = run(capsys, "predict", "--n", "5", "--d", "4", "--delta-norm", "1")
    assert json.loads(out)["seed"] == 0


def test_sweep_is_reproducible(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["sweep", "--preset", "setting3", "--reps", "30", "--d-grid", "10,20", "--seed", "5"]
    code, out1, _ = run(capsys, *args, "--out", str(a))
    assert code == 0
    code, out2, _ = run(capsys, *args, "--out", str(b), "--threads", "3")
    assert a.read_bytes() == b.read_bytes()
    s1, s2 = _strip_time(out1), _strip_time(out2)
    s1.pop("table"), s2.pop("table")
    s1["summary"]["config"].pop("workers"), s2["summary"]["config"].pop("workers")
    assert s1 == s2
    header = a.read_text().splitlines()[0]
    assert header == "d,n,gamma_rule,gamma_value,rejection_rate,stderr,predicted_beta,reps"


def test_sweep_config_file_and_override(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"d_grid": [8, 16], "n_rule": "fixed:20", "psi_rule": "fixed:1",
                               "bandwidth_rules": ["median"], "reps": 20, "master_seed": 9}))
    out_csv = tmp_path / "c.csv"
    code, out, _ = run(capsys, "sweep", "--config", str(cfg), "--out", str(out_csv),
                       "--d-grid", "8,12,16")
    assert code == 0
    assert json.loads(out)["seed"] == 9
    assert len(out_csv.read_text().splitlines()) == 4


def test_other_presets(capsys, tmp_path):
    code, out, _ = run(capsys, "sweep", "--preset", "ratio-curve", "--d-grid", "10,40",
                       "--reps", "20000", "--out", str(tmp_path / "r.csv"))
    assert code == 0 and set(json.loads(out)["loglog_slope"]) == {"d^0.5", "d^0.75", "d^1"}
    code, out, _ = run(capsys, "sweep", "--preset", "be-ratio", "--d-grid", "10,20",
                       "--reps", "200", "--out", str(tmp_path / "b.csv"))
    assert code == 0 and len(json.loads(out)["series"]) == 3
    code, out, _ = run(capsys, "sweep", "--preset", "qq", "--d-grid", "10", "--reps", "100",
                       "--out", str(tmp_path / "q.csv"))
    assert code == 0 and "10" in json.loads(out)["null"]
    assert run(capsys, "sweep")[0] == 1


def test_beratio_and_qq_commands(capsys, tmp_path):
    code, out, _ = run(capsys, "beratio", "--d-grid", "20,40", "--m-pairs", "300", "--law", "t6",
                       "--gamma-rule", "sqrt", "--out", str(tmp_path / "be.csv"))
    assert code == 0 and list(json.loads(out)["series"]) == ["t6 d^0.5"]
    q = tmp_path / "qq.csv"
    code, out, _ = run(capsys, "qq", "--d-grid", "10", "--reps", "100", "--out", str(q))
    assert code == 0
    lines = q.read_text().splitlines()
    assert lines[0] == "model,d,rank,statistic,normal_quantile" and len(lines) == 201


def test_round_trip_through_cli_files(tmp_path):
    M = np.random.default_rng(3).normal(size=(7, 3)) * 1e-7
    p = tmp_path / "m.csv"
    save_samples(p, M)
    assert np.array_equal(load_samples(p), M)
