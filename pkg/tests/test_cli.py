import json
import subprocess
import sys

import pytest

from peerlens.cli import build_parser, main

FAST = ["--n-trees", "5", "--max-depth", "3", "--jobs", "1"]


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run("synth", "--n", 150, "--seed", 3, "--raw", "--out", root / "snap") == 0
    assert run("dataset", "--snapshot", root / "snap", "--variant", "optimum", "--out", root / "data") == 0
    assert run("train", "--data", root / "data", "--holdout", 0.7, *FAST, "--out", root / "model") == 0
    return root


def test_pipeline_outputs(pipeline, capsys):
    root = pipeline
    assert (root / "snap" / "manifest.json").exists() and (root / "snap" / "raw").is_dir()
    assert (root / "model" / "model.json").exists() and (root / "model" / "test" / "dataset.csv").exists()
    assert run("eval", "--model", root / "model", "--out", root / "eval") == 0
    rep = json.loads((root / "eval" / "report.json").read_text())
    assert rep["tp"] + rep["tn"] + rep["fp"] + rep["fn"] == rep["n"]
    manifest = json.loads((root / "eval" / "manifest.json").read_text())
    assert manifest["run"]["command"] == "eval" and manifest["run"]["args"]["threshold"] == 0.5


def test_ingest_round_trip_of_raw(pipeline, capsys):
    raw = pipeline / "snap" / "raw"
    names = {p.name for p in raw.iterdir()}
    rank = next(raw / n for n in names if "rank" in n)
    pdb = next(raw / n for n in names if "peeringdb" in n or "pdb" in n)
    rel = next(raw / n for n in names if "rel" in n)
    assert run("ingest", "--as-rank", rank, "--pdb", pdb, "--as-rel", rel, "--date", "2024-06-01",
               "--out", pipeline / "ingested") == 0
    counts = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    synth_counts = json.loads((pipeline / "snap" / "manifest.json").read_text())
    assert counts["retained_pairs"] > 0
    assert counts["common_ases"] == synth_counts.get("counts", counts)["common_ases"]


def test_predict_format(pipeline, capsys, tmp_path):
    import csv
    with open(pipeline / "data" / "dataset.csv") as fh:
        rows = list(csv.DictReader(fh))[:3]
    pairs = tmp_path / "pairs.csv"
    lines = ["asn_a,asn_b"] + [f"{r['pair_b']},{r['pair_a']}" for r in rows] + ["1,1", "999999,1"]
    pairs.write_text("\n".join(lines) + "\n")
    assert run("predict", "--model", pipeline / "model", "--pairs", pairs) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "asn_a,asn_b,probability,label"
    body = [line.split(",") for line in out[1:]]
    assert len(body) == 5
    for a, b, p, lab in body[:3]:
        assert 0.0 <= float(p) <= 1.0 and lab == str(int(float(p) >= 0.5))
    assert body[3][2:] == ["", ""] and body[4][2:] == ["", ""]
    assert run("predict", "--model", pipeline / "model", "--pairs", pairs, "--out", tmp_path / "pred") == 0
    assert (tmp_path / "pred" / "predictions.csv").read_text().splitlines() == out


def test_explain_and_cones_and_features(pipeline):
    assert run("explain", "--model", pipeline / "model", "--data", pipeline / "data", "--rows", 5, "--perms", 4,
               "--background", 8, "--jobs", 1, "--out", pipeline / "shap") == 0
    lines = (pipeline / "shap" / "importance.csv").read_text().splitlines()
    assert lines[0] == "feature,score" and len(lines) == 35
    assert run("explain", "--model", pipeline / "model", "--method", "gain", "--out", pipeline / "gain") == 0
    assert run("cones", "--snapshot", pipeline / "snap", "--out", pipeline / "cones") == 0
    assert (pipeline / "cones" / "pair_features.csv").read_text().startswith("asn_a,asn_b,cone_overlap,affinity_score")
    assert run("features", "--snapshot", pipeline / "snap", "--variant", "default", "--correlation",
               "--out", pipeline / "feat") == 0
    assert (pipeline / "feat" / "correlation.csv").exists()


def test_experiment_rerun_byte_identical(pipeline):
    out = pipeline / "exp"
    args = ["experiment", "missing", "--snapshot", pipeline / "snap", "--seeds", 2, "--fractions", "0,0.2",
            *FAST, "--out", out]
    assert run(*args) == 0
    first = {n: (out / n).read_bytes() for n in ("reports.csv", "aggregate.csv", "manifest.json")}
    assert run(*args) == 0
    assert first == {n: (out / n).read_bytes() for n in first}


def test_train_rerun_byte_identical(pipeline, tmp_path):
    for d in ("m1", "m2"):
        assert run("train", "--data", pipeline / "data", "--seed", 4, *FAST, "--out", tmp_path / d) == 0
    assert (tmp_path / "m1" / "model.json").read_bytes() == (tmp_path / "m2" / "model.json").read_bytes()


def test_help_shows_defaults():
    proc = subprocess.run([sys.executable, "-m", "peerlens.cli", "train", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "default: 0.3" in proc.stdout and "default: gbt" in proc.stdout


def test_all_subcommands_listed():
    text = build_parser().format_help()
    for name in ("ingest", "synth", "features", "cones", "dataset", "train", "eval", "predict", "explain",
                 "experiment"):
        assert name in text


def test_exit_codes(tmp_path, capsys):
    assert run("eval", "--model", tmp_path / "nope", "--out", tmp_path / "o") == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "missing_input"
    with pytest.raises(SystemExit) as exc:
        run("train")
    assert exc.value.code == 2
    bad = tmp_path / "bad" / "model.json"
    bad.parent.mkdir()
    bad.write_text("{not json")
    assert run("eval", "--model", bad.parent, "--data", tmp_path, "--out", tmp_path / "o") == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "model_format"
    assert not (tmp_path / "o").exists()  # failed runs leave no output


def test_config_precedence(pipeline, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_trees": 3, "train": {"max_depth": 2, "seed": 9}}))
    assert run("train", "--config", cfg, "--data", pipeline / "data", "--jobs", 1, "--seed", 5,
               "--out", tmp_path / "m") == 0
    args = json.loads((tmp_path / "m" / "manifest.json").read_text())["run"]["args"]
    assert args["n_trees"] == 3 and args["max_depth"] == 2  # file beats defaults
    assert args["seed"] == 5  # command line beats file
    model = json.loads((tmp_path / "m" / "model.json").read_text())
    assert len(model["trees"]) == 3


def test_config_unknown_section_key(pipeline, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"train": {"n_treez": 3}}))
    assert run("train", "--config", cfg, "--data", pipeline / "data", "--out", tmp_path / "m") == 1
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "config"


def test_config_supplies_required(pipeline, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"dataset": {"snapshot": str(pipeline / "snap"), "variant": "filtered"}}))
    assert run("dataset", "--config", cfg, "--out", tmp_path / "d") == 0
    assert json.loads((tmp_path / "d" / "manifest.json").read_text())["width"] == 32
