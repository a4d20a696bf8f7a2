"""End-to-end pipeline orchestration: manifests, idempotence, exit codes."""

import json
import shutil

import numpy as np
import pytest
import yaml

from cortexmap.cli import load_run_config, main
from cortexmap.cli.config import ConfigError
from cortexmap.graph import load_graph

TINY = {
    "phantom": {"n_areas": 3, "n_sections": 6, "resolution": 160, "seed": 3},
    "mesh": {"target_edge_um": 3.0, "laplace_tol": 1e-4},
    "encoder": {"patch_size": 24, "epochs": 1, "batch_size": 32,
                "optimizer": "sgd", "patches_per_class": 24},
    "gnn": {"architecture": "sage", "num_layers": 2, "hidden": 32,
            "epochs": 1, "batch_size": 64, "base_lr": 0.05,
            "reference_batch": 64, "steps_per_epoch": 4},
    "priors": {"use_pm": True, "use_co": True},
}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = dict(TINY, output_dir=str(root / "run"))
    cfg_path = root / "run.yaml"
    cfg_path.write_text(yaml.safe_dump(cfg))
    assert main(["all", "-c", str(cfg_path)]) == 0
    return root, cfg_path


def test_all_produces_every_stage(pipeline):
    root, _ = pipeline
    run = root / "run"
    for stage in ("phantom", "mesh", "train-encoder", "features",
                  "train-gnn", "eval", "export"):
        man = json.loads((run / stage / "manifest.json").read_text())
        assert man["stage"] == stage
        for rel in man["outputs"]:
            assert (run / stage / rel).exists()
    graph = load_graph(run / "mesh" / "graph.bin")
    assert graph.n_nodes > 100
    assert set(np.unique(graph.labels)) <= {0, 1, 2}
    pred = np.load(run / "eval" / "predictions.npy")
    assert pred.shape == (graph.n_nodes,)
    report = json.loads((run / "eval" / "report.json").read_text())
    assert "sage" in report["models"]


def test_rerun_is_a_noop_with_identical_report(pipeline, capsys):
    root, cfg_path = pipeline
    report = root / "run" / "eval" / "report.json"
    before = report.read_bytes()
    mtime = report.stat().st_mtime_ns
    assert main(["all", "-c", str(cfg_path)]) == 0
    assert report.read_bytes() == before
    assert report.stat().st_mtime_ns == mtime  # not rewritten


def test_fresh_run_reports_are_byte_identical(pipeline, tmp_path):
    root, cfg_path = pipeline
    assert main(["all", "-c", str(cfg_path),
                 "--output-dir", str(tmp_path / "run2")]) == 0
    a = (root / "run" / "eval" / "report.json").read_bytes()
    b = (tmp_path / "run2" / "eval" / "report.json").read_bytes()
    assert a == b


def test_corrupted_artifact_is_refused_with_hashes(pipeline, caplog):
    root, cfg_path = pipeline
    target = root / "run" / "features" / "features.bin"
    original = target.read_bytes()
    try:
        target.write_bytes(original[:-1] + bytes([original[-1] ^ 0xFF]))
        code = main(["eval", "-c", str(cfg_path)])
        assert code == 3
        message = " ".join(r.getMessage() for r in caplog.records)
        assert "expected" in message and "found" in message
        assert str(target) in message
    finally:
        target.write_bytes(original)


def test_missing_upstream_stage_is_refused(tmp_path):
    cfg = dict(TINY, output_dir=str(tmp_path / "empty"))
    cfg_path = tmp_path / "run.yaml"
    cfg_path.write_text(yaml.safe_dump(cfg))
    assert main(["mesh", "-c", str(cfg_path)]) == 3


def test_changed_config_triggers_rebuild(pipeline, tmp_path):
    root, cfg_path = pipeline
    run2 = tmp_path / "copy"
    shutil.copytree(root / "run", run2)
    cfg = yaml.safe_load(cfg_path.read_text())
    cfg["output_dir"] = str(run2)
    cfg["gnn"]["steps_per_epoch"] = 5
    cfg2 = tmp_path / "changed.yaml"
    cfg2.write_text(yaml.safe_dump(cfg))
    before = (run2 / "train-gnn" / "gnn.ckpt").read_bytes()
    assert main(["train-gnn", "-c", str(cfg2)]) == 0
    assert (run2 / "train-gnn" / "gnn.ckpt").read_bytes() != before


def test_invalid_config_exit_code(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("bogus_section: {}\n")
    assert main(["all", "-c", str(bad)]) == 2
    bad.write_text("gnn: {architecture: transformer}\n")
    assert main(["all", "-c", str(bad)]) == 2
    assert main(["all", "-c", str(tmp_path / "missing.yaml")]) == 2


def test_print_config_resolves_defaults(tmp_path, capsys):
    cfg_path = tmp_path / "run.yaml"
    cfg_path.write_text(yaml.safe_dump({"phantom": {"n_areas": 4}}))
    assert main(["phantom", "-c", str(cfg_path), "--print-config"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["phantom"]["n_areas"] == 4
    assert out["gnn"]["config"]["n_classes"] == 4  # synced to the phantom
    assert out["mesh"]["target_edge_um"] == 1.8


def test_load_run_config_validates_everything_up_front():
    with pytest.raises(ConfigError, match="unknown keys"):
        load_run_config(data={"mesh": {"target_edge": 1.0}})
    with pytest.raises(ConfigError, match="encoder"):
        load_run_config(data={"encoder": {"architecture": "vgg"}})
    with pytest.raises(ConfigError):
        load_run_config(data={"phantom": {"n_areas": 1}})
    cfg = load_run_config(data={})
    assert cfg.gnn.config.n_classes == cfg.phantom.n_areas
