import json
from pathlib import Path

import pytest

from rrlevy.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
M1_FILE = str(CONFIGS / "m1.toml")


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _rows(text):
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    head = lines[0].split(",")
    return [dict(zip(head, l.split(","))) for l in lines[1:]]


def test_scale_examples(capsys):
    code, out, _ = run(capsys, "scale", "--model", M1_FILE, "--q", "0.5", "--x=-1,0")
    assert code == 0
    assert out.startswith("# model_hash=") and "backend=ClosedForm" in out.splitlines()[0]
    neg, zero = _rows(out)
    assert float(neg["W"]) == 0 and float(neg["Z"]) == 1 and float(neg["Zbar"]) == -1
    assert float(zero["W"]) == pytest.approx(2 / 3, rel=1e-14)


def test_scale_range(capsys):
    code, out, _ = run(capsys, "scale", "--model", M1_FILE, "--q", "0.5", "--range", "0,2,0.1")
    rows = _rows(out)
    assert code == 0 and len(rows) == 21
    W = [float(r["W"]) for r in rows]
    assert all(b > a for a, b in zip(W, W[1:]))
    # 17 significant digits round-trip
    assert repr(float(rows[3]["W"])) == repr(float(repr(float(rows[3]["W"]))))


def test_scale_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert run(capsys, "scale", "--model", M1_FILE, "--q", "2", "--range", "0,3,0.5", "--out", str(p))[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_config_errors(capsys, tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("sigma = 0.0\ndrift = 1.5\ndelta = 0.25\nb = 1.0\nbeta = 2\n")
    code, _, err = run(capsys, "scale", "--model", str(bad), "--q", "0.5", "--x", "1")
    assert code == 2 and "beta" in err
    bad.write_text("sigma = 0.0\ndrift = \n")
    code, _, err = run(capsys, "scale", "--model", str(bad), "--q", "0.5", "--x", "1")
    assert code == 2 and "line" in err
    code, _, err = run(capsys, "scale", "--model", str(tmp_path / "missing.toml"), "--q", "0.5", "--x", "1")
    assert code == 2 and "not found" in err
    assert run(capsys, "scale", "--model", M1_FILE)[0] == 2
    assert run(capsys)[0] == 2


def test_identity_requests(capsys):
    code, out, _ = run(capsys, "identity", "--model", M1_FILE, "--request", str(CONFIGS / "requests.toml"))
    assert code == 0
    doc = json.loads(out)
    res = {r["name"]: r for r in doc["results"]}
    assert res["dividends_npv_inf"]["value"] == "inf" and res["dividends_npv_inf"]["reason"] == "q=0"
    assert 0 < res["occupation_below_lt"]["value"] < 1
    assert doc["model_hash"]


def test_identity_single_and_csv(capsys):
    code, out, _ = run(capsys, "identity", "--model", M1_FILE, "--name", "one_sided_exit", "--q", "0.5",
                       "--x", "2", "--a", "2", "--format", "csv")
    assert code == 0
    row = _rows(out)[0]
    assert row["name"] == "one_sided_exit" and float(row["value"]) == 1.0


def test_identity_unknown_name(capsys):
    code, _, err = run(capsys, "identity", "--model", M1_FILE, "--name", "ruin", "--q", "1")
    assert code == 2 and "one_sided_exit" in err


def test_simulate_byte_identical(capsys, tmp_path):
    outs = []
    for name in ("a.json", "b.json"):
        p = tmp_path / name
        code = main(["simulate", "--model", M1_FILE, "--config", str(CONFIGS / "simulate.toml"), "--paths", "2000",
                     "--out", str(p)])
        assert code == 0
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]
    doc = json.loads(outs[0])
    assert doc["estimates"]["one_sided_exit"]["censored"] == 0
    assert doc["metadata"]["model_hash"]


def test_simulate_drift_only_with_trace(capsys, tmp_path):
    out = tmp_path / "est.json"
    code = main(["simulate", "--model", str(CONFIGS / "drift_only.toml"), "--x", "0", "--a", "2", "--q", "0.5",
                 "--paths", "5", "--out", str(out), "--trace-paths", "2"])
    assert code == 0
    est = json.loads(out.read_text())["estimates"]["t_up"]
    assert est["mean"] == pytest.approx(1.4666666666666668) and est["stderr"] == 0.0
    trace = (tmp_path / "est_trace.csv").read_text().splitlines()
    assert trace[0].startswith("# model_hash=") and trace[1] == "path,t,V,L,R,event,X"


def test_simulate_exact_with_diffusion_is_usage_error(capsys):
    code, _, err = run(capsys, "simulate", "--model", str(CONFIGS / "m1_diffusive.toml"), "--x", "1", "--a", "2",
                       "--paths", "10", "--scheme", "ExactBV")
    assert code == 2 and "ExactBV" in err


def test_verify(capsys, tmp_path):
    report = tmp_path / "rep.json"
    code, out, _ = run(capsys, "verify", "--model", M1_FILE, "--suite", "degeneracy", "--delta-zero", "--out", str(report))
    assert code == 0 and report.exists() and "failed" in out
    code, _, err = run(capsys, "verify", "--model", M1_FILE, "--suite", "bogus")
    assert code == 2


def test_verify_failure_exit_code(capsys, tmp_path, monkeypatch):
    from rrlevy import verifier

    monkeypatch.setitem(verifier.SUITES, "broken", lambda model, **_: [verifier.compare("x", {}, 1.0, 2.0, 1e-6)])
    report = tmp_path / "rep.json"
    code, _, _ = run(capsys, "verify", "--model", M1_FILE, "--suite", "broken", "--out", str(report))
    assert code == 1 and report.exists()
