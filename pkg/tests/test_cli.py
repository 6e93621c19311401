import json

import pytest

from partqap.cli import main
from partqap.formats import read_delimited, read_json

SMALL = ["--n-pos", "8", "--n-test", "6", "--n-background", "6", "--n-regions", "12",
         "--d", "8", "--parts", "3"]


def pipeline(root, solver="hungarian", scheme="bop", extra=()):
    data, model, enc = root / "data", root / "model", root / "enc"
    assert main(["synth", "--out", str(data), "--seed", "1", *SMALL]) == 0
    assert main(["learn", "--corpus", str(data / "manifest.json"), "--parts", "3",
                 "--solver", solver, "--truth", str(data / "truth.json"), "--no-timing",
                 "--out", str(model), *extra]) == 0
    assert main(["encode", "--corpus", str(data / "manifest.json"), "--model", str(model),
                 "--scheme", scheme, "--out", str(enc)]) == 0
    assert main(["train", "--encodings", str(enc), "--out", str(root / "svm.json")]) == 0
    assert main(["eval", "--encodings", str(enc), "--svm", str(root / "svm.json"),
                 "--model", str(model), "--out", str(root / "report")]) == 0
    return root / "report" / "report.json"


def test_full_pipeline_outputs(tmp_path):
    report = pipeline(tmp_path)
    rep = read_json(report)
    assert set(rep["metrics"]) == {"acc", "map"}
    assert "all-points" in rep["conventions"]["average_precision"]
    assert "wall_time" not in rep["solver_traces"]["cat0"]
    for name in ("predictions.csv", "ap.png", "confusion.png", "traces.png"):
        assert (tmp_path / "report" / name).exists()
    for name in ("parts.json", "report.json", "trace.csv", "trace.png", "assignments.csv"):
        assert (tmp_path / "model" / "cat0" / name).exists()
    header, rows = read_delimited(tmp_path / "model" / "cat0" / "assignments.csv")
    assert header == ["image_id", "part", "region"] and len(rows) == 8 * 3
    learn = read_json(tmp_path / "model" / "learn.json")
    assert learn["categories"]["cat0"]["recovery"] >= 0.9


def test_reports_byte_identical(tmp_path):
    a = pipeline(tmp_path / "a", solver="isa", scheme="sbop+pcop")
    b = pipeline(tmp_path / "b", solver="isa", scheme="sbop+pcop")
    assert a.read_bytes() == b.read_bytes()


def test_workers_env_same_result(tmp_path, monkeypatch):
    a = pipeline(tmp_path / "a")
    monkeypatch.setenv("PARTQAP_WORKERS", "2")
    b = pipeline(tmp_path / "b")
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("solver,extra", [("ipfp", ()), ("gfb", ()),
                                          ("gfb-rho", ("--step-L", "1e3", "--gfb-max-iter", "50")),
                                          ("isa", ("--early-stop-outer", "3", "--beta-rate",
                                                   "1.2"))])
def test_solver_flags(tmp_path, solver, extra):
    pipeline(tmp_path, solver=solver, extra=extra)
    rep = read_json(tmp_path / "model" / "cat1" / "report.json")
    assert rep["solver"] == solver
    if solver == "gfb-rho":
        assert rep["params"]["L"] == 1e3 and rep["iterations"] <= 50
    if solver == "isa":
        assert rep["params"]["beta_rate"] == 1.2 and rep["iterations"] <= 3


def test_mean_baseline_scheme(tmp_path):
    data = tmp_path / "data"
    main(["synth", "--out", str(data), *SMALL])
    assert main(["encode", "--corpus", str(data / "manifest.json"), "--scheme", "mean",
                 "--out", str(tmp_path / "enc")]) == 0
    assert read_json(tmp_path / "enc" / "encoding.json")["dimension"] == 8


def test_synth_spec_file(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"categories": 3, "n_pos": 2, "n_test": 1, "n_background": 1}))
    assert main(["synth", "--spec", str(spec), "--out", str(tmp_path / "d")]) == 0
    assert len(read_json(tmp_path / "d" / "manifest.json")["categories"]) == 3


def test_errors_exit_nonzero(tmp_path, capsys):
    assert main(["learn", "--corpus", str(tmp_path / "none.json"), "--parts", "2",
                 "--out", str(tmp_path / "m")]) == 2
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["learn", "--corpus", "x", "--parts", "2", "--solver", "nope", "--out", "m"])
    with pytest.raises(SystemExit):
        main(["eval", "--encodings", "x", "--svm", "y", "--metrics", "f1", "--out", "z"])
