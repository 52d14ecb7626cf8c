import json

import jsonschema
import numpy as np
import pytest

import atomcpd
from atomcpd import NumericalError, cli
from atomcpd.io import read_cpd_csv
from atomcpd.schema import load_schema


def run(argv):
    return cli.main([str(a) for a in argv])


def _diags(capsys):
    err = capsys.readouterr().err
    return [json.loads(line) for line in err.splitlines() if line.strip()]


@pytest.fixture
def lowrank(tmp_path):
    x = tmp_path / "x.csv"
    assert run(["generate", "--kind", "planted_lowrank", "--d", 20, "--n", 60, "--change-at", 30,
                "--scale", 2, "--sigma", 0.04, "--seed", 1, "--output", x]) == 0
    return x


def test_detect_smoke(tmp_path, lowrank, capsys):
    out = tmp_path / "r.json"
    code = run(["detect", "--input", lowrank, "--theta", 5, "--gamma", 1, "--lambda", 0.4,
                "--prox", "nuclear", "--output", out])
    assert code == 0
    report = json.loads(out.read_text())
    jsonschema.validate(report, load_schema("report"))
    assert report["estimates"] == [30]
    assert report["seed"] == 0
    assert all(d["level"] == "info" for d in _diags(capsys))


def test_missing_theta_names_flag(tmp_path, lowrank, capsys):
    code = run(["detect", "--input", lowrank, "--gamma", 1, "--output", tmp_path / "r.json"])
    assert code == 2
    (diag,) = _diags(capsys)
    assert diag["level"] == "error" and "--theta" in diag["message"]


def test_malformed_header_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("3;4\n1,2,3,4\n")
    code = run(["detect", "--input", bad, "--theta", 1, "--gamma", 1, "--output", tmp_path / "r.json"])
    assert code == 2
    assert "line 1" in _diags(capsys)[-1]["message"]


def test_unknown_flag_rejected(capsys):
    assert run(["detect", "--thetaa", 3]) == 2
    assert run([]) == 2
    assert run(["experiment"]) == 2


def test_numerical_error_exit_code(tmp_path, lowrank, monkeypatch, capsys):
    def boom(*args, **kwargs):
        raise NumericalError("svd did not converge", shape=[20, 20])

    monkeypatch.setattr(cli, "detect", boom)
    code = run(["detect", "--input", lowrank, "--theta", 5, "--gamma", 1, "--output", tmp_path / "r.json"])
    assert code == 3
    diag = _diags(capsys)[-1]
    assert diag["type"] == "NumericalError" and diag["shape"] == [20, 20]


def test_version_and_schema(capsys):
    assert run(["--version"]) == 0
    assert atomcpd.__version__ in capsys.readouterr().out
    assert run(["--schema", "report"]) == 0
    schema = json.loads(capsys.readouterr().out)
    assert schema["title"] == "detection report"
    assert run(["--schema"]) == 0
    assert set(json.loads(capsys.readouterr().out)) == {"signal", "report", "eta", "segments", "experiment"}


def test_config_file_overrides_flags(tmp_path, lowrank):
    cfg = tmp_path / "c.json"
    out = tmp_path / "r.json"
    cfg.write_text(json.dumps({"theta": 5, "gamma": 1.0, "lambda": 0.4, "prox": "nuclear", "output": str(out)}))
    assert run(["--config", cfg, "detect", "--input", lowrank, "--theta", 99]) == 0
    assert json.loads(out.read_text())["config"]["theta"] == 5
    cfg.write_text(json.dumps({"thetaa": 5}))
    assert run(["--config", cfg, "detect", "--input", lowrank]) == 2
    cfg.write_text(json.dumps({"theta": {"nested": 1}}))
    assert run(["--config", cfg, "detect", "--input", lowrank]) == 2


def test_streaming_flag_matches_batch(tmp_path, lowrank):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    common = ["--input", lowrank, "--theta", 5, "--gamma", 1, "--lambda", 0.4, "--prox", "nuclear"]
    assert run(["--threads", 2, "detect", *common, "--output", a]) == 0
    assert run(["detect", *common, "--streaming", "--output", b]) == 0
    ra, rb = (json.loads(p.read_text()) for p in (a, b))
    for r in (ra, rb):
        r.pop("timing_ms"), r.pop("streaming")
    assert ra == rb


@pytest.mark.parametrize("kind, gen_args, det_args", [
    ("sparse_blocks", ["--p", 50, "--n", 200, "--k-blocks", 4, "--s", 5, "--base", 3, "--sigma", 1.0],
     ["--theta", 10, "--gamma", 3, "--lambda", "auto", "--prox", "l1", "--samples", 300]),
    ("planted_lowrank", ["--d", 12, "--n", 60, "--change-at", 30, "--scale", 2, "--sigma", 0.1],
     ["--theta", 5, "--gamma", 1.5, "--lambda", 0.3, "--prox", "nuclear"]),
    ("cut_matrix", ["--d", 10, "--n", 120, "--change-points", "40,80", "--sigma", 0.5],
     ["--theta", 10, "--gamma", 3, "--lambda", 0.2, "--prox", "nuclear-ball", "--mode", "groups"]),
])
def test_round_trip_all_kinds(tmp_path, kind, gen_args, det_args):
    x, rep, seg = tmp_path / "x.csv", tmp_path / "r.json", tmp_path / "seg.csv"
    assert run(["generate", "--kind", kind, *gen_args, "--seed", 3, "--output", x]) == 0
    side = json.loads((tmp_path / "x.json").read_text())
    jsonschema.validate(side, load_schema("signal"))
    assert run(["detect", "--input", x, *det_args, "--signal", tmp_path / "x.json", "--output", rep]) == 0
    report = json.loads(rep.read_text())
    jsonschema.validate(report, load_schema("report"))
    assert run(["reconstruct", "--input", x, "--report", rep, "--signal", tmp_path / "x.json",
                "--samples", 200, "--output", seg]) == 0
    meta = json.loads((tmp_path / "seg.json").read_text())
    jsonschema.validate(meta, load_schema("segments"))
    values = read_cpd_csv(seg)
    assert values.n == len(meta["segments"]) >= 1
    assert values.shape == tuple(side["shape"])


def test_reconstruct_lambda_from_report(tmp_path, lowrank):
    rep, seg = tmp_path / "r.json", tmp_path / "seg.csv"
    run(["detect", "--input", lowrank, "--theta", 5, "--gamma", 1, "--lambda", 0.4, "--prox", "nuclear", "--output", rep])
    assert run(["reconstruct", "--input", lowrank, "--report", rep, "--sigma", 0.04, "--output", seg]) == 0
    meta = json.loads((tmp_path / "seg.json").read_text())
    # lam* = 0.4 sqrt(5) / 0.04, then lam' = 0.04 / sqrt(m) lam*
    assert meta["segments"][0]["lambda_prime"] == pytest.approx(0.4 * np.sqrt(5 / meta["segments"][0]["m"]))
    assert run(["reconstruct", "--input", lowrank, "--report", rep, "--output", seg]) == 2


def test_eta_command(tmp_path, capsys):
    assert run(["eta", "--prox", "l1", "--sparsity", 5, "--dim", 100, "--samples", 300]) == 0
    payload = json.loads(capsys.readouterr().out)
    jsonschema.validate(payload, load_schema("eta"))
    assert payload["eta"] <= payload["bound"]
    out = tmp_path / "eta.json"
    assert run(["eta", "--prox", "nuclear", "--rank", 1, "--dim", 10, "--samples", 200, "--output", out]) == 0
    assert json.loads(out.read_text())["rank"] == 1
    assert run(["eta", "--prox", "none", "--dim", 10]) == 2
    assert run(["eta", "--prox", "l1", "--dim", 10]) == 2


def test_experiment_run(tmp_path, capsys):
    assert run(["experiment", "run", "--id", "tradeoff_sampling", "--seed", 1, "--out", tmp_path]) == 0
    stored = json.loads((tmp_path / "tradeoff.json").read_text())
    jsonschema.validate(stored, load_schema("experiment"))
    assert stored["provenance"]["seed"] == 1
    assert (tmp_path / "tradeoff_traces.csv").exists()
    assert run(["experiment", "run", "--id", "exp7"]) == 2
