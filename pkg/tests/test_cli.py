from __future__ import annotations

import json

import pytest

from cloudlead.cli import MANIFEST_NAME, main

from _pipeline import run_pipeline


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    return root, run_pipeline(root)


def test_pipeline_outputs(pipeline):
    _, files = pipeline
    for d in ("data", "events", "correlate", "select", "blend", "train", "forecast", "evaluate", "report"):
        assert f"{d}/{MANIFEST_NAME}" in files
    for name in ("data/ground_truth.json", "select/detector_network.json", "select/phi_curve.csv",
                 "blend/blend_report.json", "train/checkpoint.json", "train/training_log.csv",
                 "forecast/predictions.csv", "evaluate/evaluation.json", "report/ablation.csv",
                 "report/horizon_matrix.csv", "report/horizon_argmin.csv", "events/events.csv"):
        assert name in files
    man = json.loads(files[f"report/{MANIFEST_NAME}"])
    assert man["subcommand"] == "report" and man["output_dir"] == "."
    assert "threads" not in man["arguments"]
    assert sorted(man["outputs"]) == man["outputs"]
    assert set(json.loads(files["blend/blend_report.json"])) >= {"sources", "linear", "tcn"}
    assert files["correlate/correlations.csv"].startswith(b"day,detector_id,delta_t_max,pcc_max,defined,scenario")


def test_pipeline_repeatable(pipeline, tmp_path):
    _, files = pipeline
    again = run_pipeline(tmp_path / "again")
    assert again.keys() == files.keys()
    assert [k for k in files if files[k] != again[k]] == []


def test_exit_codes(pipeline, tmp_path, capsys):
    root, _ = pipeline
    data = str(root / "data")
    assert main(["select", "--data", data, "--out", str(tmp_path / "a"), "--target", "nope"]) == 2
    assert "unknown site id" in capsys.readouterr().err
    assert main(["select", "--data", str(tmp_path / "missing"), "--out", str(tmp_path / "b"),
                 "--target", "S12"]) == 3
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"simluate": {}}))
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "c")]) == 2
    bad.write_text(json.dumps({"sim": {"coverage": 3.0}}))
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "c")]) == 2
    assert main(["select", "--data", data, "--out", str(tmp_path / "d"), "--target", "S12",
                 "--threads", "0"]) == 2
    assert main(["blend", "--data", data, "--out", str(tmp_path / "e"), "--target", "S12",
                 "--train-range", "10:5"]) == 2
    pred = tmp_path / "p.csv"
    pred.write_text("origin,day\n1,2\n")
    assert main(["evaluate", "--predictions", str(pred), "--out", str(tmp_path / "f")]) == 3
    assert not (tmp_path / "f").exists()


def test_flags_override_config(pipeline, tmp_path):
    root, _ = pipeline
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"detector": {"target": "S21"}}))
    assert main(["select", "--config", str(cfg), "--data", str(root / "data"), "--out", str(tmp_path / "o"),
                 "--target", "S12"]) == 0
    net = json.loads((tmp_path / "o" / "detector_network.json").read_text())
    assert net["target_id"] == "S12"
