import csv
import json

import pytest
from conftest import write_experiment

from brainage import pipeline as pl
from brainage._utils import read_json
from brainage.cli import main


@pytest.fixture(scope="module")
def smoke(small_corpus, tmp_path_factory):
    root = tmp_path_factory.mktemp("smoke")
    cfg = write_experiment(root / "exp.json", small_corpus, root / "out")
    assert main(["run", str(cfg)]) == 0
    return cfg, root / "out"


def test_smoke_run_emits_three_agreement_matrices(smoke):
    _, out = smoke
    for kind in ("band", "measure", "region"):
        with open(out / "agreement" / f"agreement_{kind}.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0][1:4] == ["Lasso", "GBDT", "KNN"]
        assert len(rows) == 4
    assert (out / "agreement" / "replication.csv").exists()
    assert list((out / "report").glob("heatmap_*.svg"))


def test_manifest_records_stages(smoke):
    _, out = smoke
    man = read_json(out / "manifest.json")
    assert man["seed"] == 5
    assert set(man["stages"]) == set(pl.STAGES)
    for info in man["stages"].values():
        assert info["key"] and info["outputs"]
        assert "duration_s" in info


def test_rerun_skips_and_force_reproduces(smoke, capsys):
    cfg, out = smoke
    before = {p: p.read_bytes() for p in out.rglob("*.csv")}
    assert main(["run", str(cfg)]) == 0
    assert capsys.readouterr().out.count("skipped") == len(pl.STAGES)
    assert main(["run", str(cfg), "--force"]) == 0
    after = {p: p.read_bytes() for p in out.rglob("*.csv")}
    assert before.keys() == after.keys()
    changed = [str(p) for p in before if before[p] != after[p]]
    assert changed == []


def test_edited_input_invalidates_downstream(smoke, tmp_path):
    cfg, out = smoke
    obj = json.loads(cfg.read_text())
    obj["explain"]["max_samples"] = 4
    obj["output"] = str(tmp_path / "out")
    # share the upstream artifacts, then change only the explain settings
    import shutil

    shutil.copytree(out, tmp_path / "out")
    cfg2 = tmp_path / "exp.json"
    cfg2.write_text(json.dumps(obj))
    man = pl.run_pipeline(pl.load_config(cfg2))
    skipped = {k for k, v in man["stages"].items() if v["skipped"]}
    assert skipped == {"preprocess", "extract", "train"}


def test_missing_region_file_fails_before_compute(small_corpus, tmp_path, capsys):
    cfg = write_experiment(tmp_path / "exp.json", small_corpus, tmp_path / "out",
                           regions=str(tmp_path / "nope.json"))
    assert main(["run", str(cfg)]) != 0
    err = capsys.readouterr().err
    assert "config" in err and "regions" in err
    assert not (tmp_path / "out").exists()


def test_config_validation_collects_all_problems(small_corpus, tmp_path):
    cfg = write_experiment(tmp_path / "exp.json", small_corpus, tmp_path / "out", families=["Nope"], budget=0)
    obj = json.loads(cfg.read_text())
    del obj["seed"]
    cfg.write_text(json.dumps(obj))
    with pytest.raises(pl.ConfigError) as exc:
        pl.load_config(cfg)
    msg = str(exc.value)
    assert "seed" in msg and "Nope" in msg and "budget" in msg


def test_output_env_override(small_corpus, tmp_path, monkeypatch):
    cfg = write_experiment(tmp_path / "exp.json", small_corpus, tmp_path / "out")
    monkeypatch.setenv(pl.OUTPUT_ENV, str(tmp_path / "elsewhere"))
    assert pl.load_config(cfg).output == tmp_path / "elsewhere"


def test_stage_failure_is_tagged(small_corpus, tmp_path, capsys):
    cfg = write_experiment(tmp_path / "exp.json", small_corpus, tmp_path / "out")
    assert main(["train", str(cfg)]) != 0  # features.csv was never extracted
    assert "error [train]" in capsys.readouterr().err


def write_cv(path, family, variant, folds):
    mean = sum(folds) / len(folds)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"variant": variant, "best": {
        "family": family, "hyper": {}, "fold_mae": folds, "mean": mean, "std": 0.0,
        "folds": [0, 1, 2], "seed": 0}}))


def test_summarize_two_families(tmp_path):
    write_cv(tmp_path / "e" / "models" / "GBDT.cv.json", "GBDT", "128-All", [1.6, 1.62, 1.64])
    write_cv(tmp_path / "e" / "models" / "KNN.cv.json", "KNN", "128-All", [2.4, 2.43, 2.46])
    assert main(["summarize", str(tmp_path / "e"), "--out", str(tmp_path / "t.csv")]) == 0
    with open(tmp_path / "t.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["family"] for r in rows] == ["GBDT", "KNN"]
    assert rows[0]["128-All"] == "1.62 ± 0.02"
    assert [r["128-All_best"] for r in rows] == ["1", "1"]  # each family's only variant


def test_summarize_across_variants(tmp_path):
    write_cv(tmp_path / "a" / "models" / "GBDT.cv.json", "GBDT", "12-EC", [2.0, 2.0, 2.0])
    write_cv(tmp_path / "b" / "models" / "GBDT.cv.json", "GBDT", "128-All", [1.5, 1.5, 1.5])
    rows = pl.summarize([tmp_path / "a", tmp_path / "b"])
    assert len(rows) == 1
    assert rows[0]["128-All"].startswith("1.50") and rows[0]["12-EC"].startswith("2.00")
    assert rows[0]["128-All_best"] == 1 and rows[0]["12-EC_best"] == 0


def test_direct_stage_commands(smoke, tmp_path):
    _, out = smoke
    feats = out / "features.csv"
    assert main(["train", "--features", str(feats), "--family", "KNN", "--budget", "2", "--seed", "1",
                 "--out", str(tmp_path / "models")]) == 0
    assert (tmp_path / "models" / "summary.csv").exists()
    assert main(["explain", "--model", str(tmp_path / "models" / "KNN.json"), "--features", str(feats),
                 "--fold-test", "--background", "3", "--max-samples", "4", "--out", str(tmp_path / "shap")]) == 0
    assert main(["agree", "--shap-dir", str(tmp_path / "shap"), "--features", str(feats),
                 "--out", str(tmp_path / "agree")]) == 0
    assert main(["report", "--kind", "heatmap", "--in", str(tmp_path / "agree" / "agreement_band.csv"),
                 "--out", str(tmp_path / "band.svg")]) == 0
    assert (tmp_path / "band.svg").read_text().startswith("<svg")


def test_direct_stage_needs_paths(capsys):
    assert main(["train"]) != 0
    assert "--features" in capsys.readouterr().err
