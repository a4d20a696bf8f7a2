"""Metrics, colored-mesh export and deterministic run reports."""

import json

import numpy as np
import pytest

from cortexmap.mesh import TriangleMesh
from cortexmap.mesh.meshes import load_ply
from cortexmap.report import (
    NEUTRAL_COLOR,
    EvalResult,
    config_hash,
    evaluate_predictions,
    export_colored_mesh,
    f1_per_class,
    label_palette,
    macro_f1,
    run_report,
    summarize_scores,
)


def test_macro_f1_worked_example_three_classes():
    # class 0: P=2/3, R=2/2 -> F1=0.8; class 1: P=1/2, R=1/2 -> 0.5;
    # class 2: P=0, R=0 -> 0; macro = (0.8 + 0.5 + 0) / 3
    y_true = np.array([0, 0, 1, 1, 2])
    y_pred = np.array([0, 0, 1, 0, 1])
    got = macro_f1(y_true, y_pred, n_classes=3)
    assert np.isclose(got, (0.8 + 0.5 + 0.0) / 3)


def test_macro_f1_averages_only_over_present_classes():
    y_true = np.array([0, 0, 1, 1])
    y_pred = np.array([0, 0, 1, 2])  # class 2 predicted but never true
    per = f1_per_class(y_true, y_pred, n_classes=3)
    assert per[2] == 0.0
    want = (per[0] + per[1]) / 2
    assert np.isclose(macro_f1(y_true, y_pred, n_classes=3), want)


def test_macro_f1_is_permutation_invariant():
    rng = np.random.default_rng(0)
    y_true = rng.integers(0, 4, size=200)
    y_pred = rng.integers(0, 4, size=200)
    base = macro_f1(y_true, y_pred, n_classes=4)
    perm = rng.permutation(200)
    assert macro_f1(y_true[perm], y_pred[perm], n_classes=4) == base


def test_macro_f1_rejects_empty():
    with pytest.raises(ValueError):
        macro_f1(np.array([]), np.array([]), n_classes=2)


def test_evaluate_predictions_confusion_and_rates():
    y_true = np.array([0, 0, 1, 1, 1, 2])
    y_pred = np.array([0, 1, 1, 1, 0, 2])
    res = evaluate_predictions(y_true, y_pred, n_classes=3, split="test")
    assert res.n_samples == 6
    assert res.confusion.sum() == 6
    assert np.array_equal(res.confusion.sum(axis=1),
                          np.bincount(y_true, minlength=3))
    assert np.isclose(res.precision[1], 2 / 3)
    assert np.isclose(res.recall[1], 2 / 3)
    assert res.split == "test"
    payload = res.to_json()
    assert json.dumps(payload)  # serializable
    assert payload["macro_f1"] == res.macro_f1


def test_label_palette_is_stable_and_distinct():
    pal = label_palette(8)
    assert pal.shape == (8, 3)
    assert pal.dtype == np.uint8
    assert len({tuple(c) for c in pal}) == 8
    assert np.array_equal(pal, label_palette(8))


def test_export_colored_mesh_round_trip(tmp_path):
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype=float)
    faces = np.array([[0, 1, 2], [1, 3, 2]])
    mesh = TriangleMesh(vertices=verts, faces=faces)
    labels = np.array([0, 1, -1, 0])
    colors = export_colored_mesh(tmp_path / "m.ply", mesh, labels)
    assert tuple(colors[2]) == NEUTRAL_COLOR
    assert np.array_equal(colors[0], colors[3])
    mesh2, colors2 = load_ply(tmp_path / "m.ply")
    assert np.array_equal(colors2, colors)
    with pytest.raises(ValueError, match="labels"):
        export_colored_mesh(tmp_path / "n.ply", mesh, labels[:2])


def test_config_hash_is_order_insensitive():
    a = config_hash({"x": 1, "y": [1, 2]})
    b = config_hash({"y": [1, 2], "x": 1})
    assert a == b
    assert a != config_hash({"x": 2, "y": [1, 2]})


def test_summarize_scores():
    s = summarize_scores([0.5, 0.7, 0.6])
    assert np.isclose(s["mean"], 0.6)
    assert s["min"] == 0.5 and s["max"] == 0.7 and s["n_runs"] == 3
    with pytest.raises(ValueError):
        summarize_scores([])


def test_run_report_is_byte_deterministic(tmp_path):
    res = evaluate_predictions(np.array([0, 1, 1]), np.array([0, 1, 0]),
                               n_classes=2, split="test")
    models = {"sage": {"seed": 3, "history": [{"epoch": 0, "loss": 1.0}],
                       "evals": {"test": res}}}
    cfg = {"n_areas": 2, "seed": 3}
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    run_report(models, cfg, path=p1)
    run_report(models, cfg, path=p2)
    assert p1.read_bytes() == p2.read_bytes()
    report = json.loads(p1.read_text())
    assert report["format"] == "cortexmap-report-v1"
    assert report["config_hash"] == config_hash(cfg)
    assert report["models"]["sage"]["splits"]["test"]["macro_f1"] == res.macro_f1


def test_run_report_requires_models():
    with pytest.raises(ValueError):
        run_report({}, {"seed": 0})
