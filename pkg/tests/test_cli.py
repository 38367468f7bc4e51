import json

import pytest

from lmelineup.cli import main


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def test_synth_then_htest_sweep(workspace, capsys):
    main(["synth", "--kind", "radon_like", "--params", '{"g": 25}',
          "--seed", "3", "--out", "radon.csv"])
    (workspace / "model.cfg").write_text(
        "response = y\nfixed = intercept, floor\nrandom = intercept, floor\n"
        "group = group\n")
    main(["htest", "--data", "radon.csv", "--spec", "model.cfg",
          "--min-size", "3:6", "--csv-out", "sweep.csv"])
    out = capsys.readouterr().out
    assert "min size" in out and "naive p" in out
    rows = (workspace / "sweep.csv").read_text().strip().splitlines()
    assert rows[0].startswith("min_group_size")
    assert len(rows) >= 2


def test_pvalue_single_and_combined(workspace, capsys):
    main(["pvalue", "--x", "0", "--k", "50", "--reps", "100000", "--json-out",
          "p1.json"])
    doc = json.loads((workspace / "p1.json").read_text())
    assert doc["p"] == 1.0 and doc["method"] == "visual_mc"

    main(["pvalue", "--x", "0", "--k", "50,60", "--reps", "100000",
          "--json-out", "p2.json"])
    doc = json.loads((workspace / "p2.json").read_text())
    assert doc["p"] == 1.0 and doc["method"] == "combined_mc"

    main(["pvalue", "--x", "1", "--k", "1", "--method", "binomial",
          "--json-out", "p3.json"])
    doc = json.loads((workspace / "p3.json").read_text())
    assert doc["p"] == pytest.approx(0.05)


def test_pvalue_from_evaluation_log(workspace):
    lines = [json.dumps({"lineup_id": "L1", "panel_index": 4}),
             json.dumps({"lineup_id": "L1", "panel_index": 9}),
             json.dumps({"lineup_id": "L2", "panel_index": 4})]
    (workspace / "picks.ndjson").write_text("\n".join(lines) + "\n")
    main(["pvalue", "--evals", "picks.ndjson", "--answer", "4", "--lineup", "L1",
          "--reps", "100000", "--json-out", "p4.json"])
    doc = json.loads((workspace / "p4.json").read_text())
    assert doc["x"] == 1 and doc["K"] == 2


def test_demo_study_simulate_report(workspace, capsys):
    main(["demo-study", "--data-dir", "sd", "--study", "demo",
          "--designs", "fanned", "--replicates", "1", "--seed", "1"])
    main(["simulate", "--data-dir", "sd", "--study", "demo",
          "--observers", "5", "--accuracy", "0.5", "--seed", "2"])
    main(["report", "--data-dir", "sd", "--study", "demo",
          "--reps", "100000", "--json-out", "rep.json"])
    out = capsys.readouterr().out
    assert "study demo" in out
    doc = json.loads((workspace / "rep.json").read_text())
    assert doc["replicates"][0]["K"] == 5
