import json
import math

import numpy as np
import pytest

from inforelay import experiment, recnet
from inforelay.experiment import AnalysisConfig, Cell, ExperimentConfig, run_experiment, summarize

SMALL = dict(tasks=["memory"], archs=["GRU"], regimes=["fixed2"], replicates=1, base_seed=3,
             analysis=AnalysisConfig(n_episodes=200, n_eval=80, knockout_samples=3,
                                     removal_samples=3))


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    config = ExperimentConfig(output_dir=str(out), **SMALL)
    return out, config, run_experiment(config)


def test_manifest_contract(small_run):
    out, config, manifest = small_run
    entry = manifest["cells"]["memory/GRU/fixed2/rep00"]
    assert entry["status"] == "ok"
    assert entry["seed"] == Cell("memory", "GRU", "fixed2", 0).seed(3)
    for name in ("checkpoint.json", "delay_accuracy.csv", "relay_matrix.csv", "knockout.csv",
                 "relay_over_time.csv", "ordering_A.csv", "pca_scores.csv", "pca_points.csv"):
        f = entry["files"][name]
        assert (out / f["path"]).exists()
        assert f["sha256"] == experiment._sha256(out / f["path"])
    written = {p.name for p in (out / "memory/GRU/fixed2/rep00").iterdir()}
    assert written == set(entry["files"])
    rows = (out / entry["files"]["delay_accuracy.csv"]["path"]).read_text().splitlines()
    assert rows[0] == "delay,overall,acc_a,acc_b,acc_c"
    assert [int(r.split(",")[0]) for r in rows[1:]] == list(range(10))
    knock = (out / entry["files"]["knockout.csv"]["path"]).read_text().splitlines()
    assert len(knock) == 1 + 3 * 13
    assert entry["metrics"]["analysis_time"] == 10


def test_rerun_is_idempotent(small_run, monkeypatch):
    out, config, manifest = small_run
    before = (out / experiment.MANIFEST).read_bytes()

    def boom(*a, **k):
        raise AssertionError("retrained a completed cell")
    monkeypatch.setattr(recnet, "train", boom)
    again = run_experiment(config)
    assert again == manifest
    assert (out / experiment.MANIFEST).read_bytes() == before


def test_outputs_reproducible(small_run, tmp_path):
    out, _, manifest = small_run
    other = run_experiment(ExperimentConfig(output_dir=str(tmp_path), **SMALL))
    a = manifest["cells"]["memory/GRU/fixed2/rep00"]["files"]
    b = other["cells"]["memory/GRU/fixed2/rep00"]["files"]
    assert {k: v["sha256"] for k, v in a.items()} == {k: v["sha256"] for k, v in b.items()}


def test_failed_cell_recorded(tmp_path):
    config = ExperimentConfig(output_dir=str(tmp_path), tasks=["memory"], archs=["RNN", "LSTM"],
                              regimes=["fixed1"], train={"max_epochs": 1, "max_restarts": 0,
                                                         "n_train": 64, "n_eval": 64,
                                                         "target_accuracy": 1.01},
                              analysis={"n_eval": 16})
    manifest = run_experiment(config)
    assert [e["status"] for e in manifest["cells"].values()] == ["failed", "failed"]
    assert "metrics" not in manifest["cells"]["memory/RNN/fixed1/rep00"]


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        run_experiment(ExperimentConfig(output_dir=str(blocker / "sub"), **SMALL))


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        ExperimentConfig(replicates=0)
    with pytest.raises(ValueError):
        ExperimentConfig(archs=["MLP"])
    with pytest.raises(ValueError):
        ExperimentConfig(tasks=["maze"])
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"tasks": ["block"], "regimes": ["random"], "replicates": 2,
                                "train": {"lr": 0.01}}))
    c = ExperimentConfig.from_file(path, replicates=3)
    assert c.regimes == ["random1-5"] and c.replicates == 3 and c.train.lr == 0.01
    assert len(list(c.cells())) == 9


def test_seeds_stable_and_distinct():
    cells = list(ExperimentConfig(replicates=4).cells())
    seeds = [c.seed(0) for c in cells]
    assert len(set(seeds)) == len(seeds)
    assert seeds == [c.seed(0) for c in cells]
    assert cells[0].seed(0) != cells[0].seed(1)
    assert experiment.sub_seed(5, "a") == experiment.sub_seed(5, "a") != experiment.sub_seed(5, "b")


def fake_manifest(root, replicate_tables):
    cells = {}
    for rep, table in enumerate(replicate_tables):
        key = f"memory/RNN/fixed1/rep{rep:02d}"
        (root / key).mkdir(parents=True)
        rows = ["delay,overall,acc_a,acc_b,acc_c"]
        rows += [f"{d},{v!r},{v!r},{v!r},{v!r}" for d, v in enumerate(table)]
        (root / key / "delay_accuracy.csv").write_text("\n".join(rows) + "\n")
        cells[key] = {"task": "memory", "arch": "RNN", "regime": "fixed1", "replicate": rep,
                      "status": "ok",
                      "files": {"delay_accuracy.csv": {"path": f"{key}/delay_accuracy.csv"}},
                      "metrics": {"r": 0.1 * (rep + 1), "overlap": 0.5,
                                  "concepts_per_node": [0.5, 0.5, 0, 0],
                                  "nodes_per_concept": [0] * 12 + [1]}}
    return {"cells": cells}


def test_summarize_single_and_identical(tmp_path):
    s = summarize(fake_manifest(tmp_path / "one", [[0.9] * 10]), tmp_path / "one")
    assert all(row[5] == 0.0 for row in s.delay_accuracy)
    s = summarize(fake_manifest(tmp_path / "two", [[0.8] * 10, [0.8] * 10]), tmp_path / "two")
    assert all(row[5] == 0.0 and row[4] == 0.8 for row in s.delay_accuracy)


def test_summarize_hand_computed(tmp_path):
    vals = [0.7, 0.9, 1.0]
    tables = [[v] * 10 for v in vals]
    s = summarize(fake_manifest(tmp_path, tables), tmp_path)
    mean = sum(vals) / 3
    se = math.sqrt(sum((v - mean) ** 2 for v in vals) / 2) / math.sqrt(3)
    for row in s.delay_accuracy:
        assert abs(row[4] - mean) < 1e-12 and abs(row[5] - se) < 1e-12 and row[6] == 3
    assert s.temporal == [("memory", "RNN", "fixed1", (0.1 + 0.2 + 0.3) / 3, 0.5, 3)]
    files = experiment.write_summary(s, tmp_path / "out")
    assert (tmp_path / "out" / files[0]).read_text().splitlines()[0] == "task,arch,regime,delay,mean,se,n"


def test_summarize_empty():
    with pytest.raises(ValueError):
        summarize({"cells": {}})


def test_standard_error():
    assert experiment.standard_error([3.0]) == 0.0
    np.testing.assert_allclose(experiment.standard_error([1.0, 3.0]), 1.0)
