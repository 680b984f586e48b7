import csv
import json

import pytest

from partfusion import io
from partfusion.cli import EXIT_INVALID, EXIT_IO, EXIT_OK, main


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    sim = root / "sim"
    assert main(["simulate", "--seed", "1", "--out-dir", str(sim)]) == EXIT_OK
    assert main(["fuse", "--runs", str(sim / "runs.jsonl"), "--out", str(root / "fused.jsonl")]) == EXIT_OK
    assert main(["group", "--in", str(root / "fused.jsonl"), "--out", str(root / "groups.jsonl")]) == EXIT_OK
    assert main(["match", "--pred", str(root / "fused.jsonl"), "--truth", str(sim / "truth.jsonl"),
                 "--out", str(root / "match.csv")]) == EXIT_OK
    assert main(["eval", "--pred", str(root / "fused.jsonl"), "--truth", str(sim / "truth.jsonl"),
                 "--out-dir", str(root / "eval"), "--grid", "24"]) == EXIT_OK
    return root


def test_simulate_outputs(pipeline):
    sim = pipeline / "sim"
    truth = list(io.read_jsonl(sim / "truth.jsonl"))
    assert truth and all(r["scene"] == 1 for r in truth)
    config = json.loads((sim / "config.json").read_text())
    assert config["seed"] == 1 and config["n_runs"] == 10
    runs = {r["run"] for r in io.read_jsonl(sim / "runs.jsonl")}
    assert runs <= set(range(10))


def test_fused_parts_cover_truth(pipeline):
    fused = list(io.read_jsonl(pipeline / "fused.jsonl"))
    truth = list(io.read_jsonl(pipeline / "sim" / "truth.jsonl"))
    assert len(fused) >= len(truth) - 1
    assert all(r["state_unit"] in ("deg", "m", "none") for r in fused)


def test_group_records(pipeline):
    groups = list(io.read_jsonl(pipeline / "groups.jsonl"))
    members = sorted(i for g in groups for i in g["members"])
    assert members == list(range(len(members)))
    assert all({"category", "confidence", "clique"} <= set(g) for g in groups)


def test_match_csv(pipeline):
    with open(pipeline / "match.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    truth = list(io.read_jsonl(pipeline / "sim" / "truth.jsonl"))
    assert len(rows) == len(truth)
    assert {"cost", "corners", "rotation", "axis", "total"} <= set(rows[0])
    assert len({r["pred"] for r in rows}) == len(rows)


def test_eval_and_report(pipeline):
    report = json.loads((pipeline / "eval" / "report.json").read_text())
    assert 0.0 <= report["ap"]["corner@0.1"] <= 1.0
    assert "fscore@80" in report["ap"]
    assert (pipeline / "eval" / "detection.csv").read_text().startswith("metric,")
    out = pipeline / "summary.csv"
    src = str(pipeline / "eval" / "report.json")
    assert main(["report", src, src, "--out", str(out)]) == EXIT_OK
    rows = list(csv.DictReader(open(out, newline="")))
    assert [r["source"] for r in rows] == [src, src, "mean"]


def test_missing_file_is_io_error(tmp_path):
    assert main(["fuse", "--runs", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "o.jsonl")]) == EXIT_IO


def test_invalid_record_rejected(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"scene": 0, "center": [0, 0, 0]}\n')
    assert main(["fuse", "--runs", str(bad), "--out", str(tmp_path / "o.jsonl")]) == EXIT_INVALID
    assert "invalid input" in capsys.readouterr().err


def test_invalid_config_rejected(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"fp_rate": 2.0}')
    assert main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path / "s")]) == EXIT_INVALID


def test_toml_config(tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text("n_runs = 3\nn_instances = 1\n")
    assert main(["simulate", "--seed", "5", "--config", str(cfg), "--out-dir", str(tmp_path / "s")]) == EXIT_OK
    runs = {r["run"] for r in io.read_jsonl(tmp_path / "s" / "runs.jsonl")}
    assert max(runs) <= 2
