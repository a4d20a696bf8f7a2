"""Contrastive loss oracle, encoder structure and feature extraction."""

import numpy as np
import pytest

from cortexmap.autodiff import ShapeError, Tape, Tensor, backward
from cortexmap.encoder import (
    AugmentationConfig,
    EncoderConfig,
    augment,
    build_encoder,
    embed_nodes,
    extract_patch,
    load_features,
    mirror_flip,
    normalize_rows,
    save_features,
    stage_channel_plan,
    supcon_loss,
    supcon_loss_bruteforce,
)

from conftest import grad_check, numeric_grads


def _unit_rows(rng, n, d):
    z = rng.normal(size=(n, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def test_supcon_matches_bruteforce_oracle():
    rng = np.random.default_rng(0)
    for trial in range(100):
        n = int(rng.integers(2, 17))
        d = int(rng.integers(2, 9))
        tau = float(rng.choice([0.07, 0.5, 1.0]))
        z = _unit_rows(rng, n, d)
        labels = rng.integers(0, max(2, n // 2), size=n)
        got = float(supcon_loss(Tensor(z, dtype=np.float64), labels, tau).data)
        want = supcon_loss_bruteforce(z, labels, tau)
        assert abs(got - want) < 1e-6, f"trial {trial}: {got} vs {want}"


def test_supcon_no_positive_anchors_contribute_zero():
    rng = np.random.default_rng(1)
    z = _unit_rows(rng, 4, 5)
    loss = supcon_loss(Tensor(z, dtype=np.float64), np.arange(4), 0.5)
    assert float(loss.data) == 0.0


def test_supcon_rejects_non_unit_rows():
    z = np.ones((3, 4))
    with pytest.raises(ValueError, match="unit-norm"):
        supcon_loss(Tensor(z), np.zeros(3, dtype=int), 0.07)


def test_supcon_gradient():
    rng = np.random.default_rng(2)
    raw = Tensor(rng.normal(size=(6, 4)), requires_grad=True, dtype=np.float64)
    labels = np.array([0, 0, 1, 1, 2, 0])
    err = grad_check(lambda: supcon_loss(normalize_rows(raw), labels, 0.5), [raw])
    assert err < 1e-6


def test_normalize_rows_gradient_and_norms():
    rng = np.random.default_rng(3)
    x = Tensor(rng.normal(size=(5, 3)), requires_grad=True, dtype=np.float64)
    out = normalize_rows(x)
    assert np.allclose(np.linalg.norm(out.data, axis=1), 1.0, atol=1e-6)


def test_stage_channel_plan_and_width():
    assert stage_channel_plan(EncoderConfig(patch_size=64)) == [16, 32, 64, 64, 128, 128]
    wide = EncoderConfig(patch_size=64, width_multiplier=2)
    assert stage_channel_plan(wide) == [32, 64, 128, 128, 256, 256]
    assert wide.embedding_dim == 256


def test_base_architecture_builds_at_paper_scale():
    # without padding the conv stack only fits paper-sized patches
    cfg = EncoderConfig(architecture="base", patch_size=1216)
    f, g = build_encoder(cfg, rng=np.random.default_rng(0))
    assert not cfg.use_batch_norm
    assert len(g.layers) == 3


@pytest.mark.parametrize("arch", ["res"])
def test_encoder_shapes_and_unit_output(arch):
    cfg = EncoderConfig(architecture=arch, patch_size=64, projection_dim=16)
    f, g = build_encoder(cfg, rng=np.random.default_rng(0))
    x = Tensor(np.random.default_rng(1).random((2, 1, 64, 64)).astype(np.float32))
    emb = f.forward(x)
    assert emb.shape == (2, cfg.embedding_dim)
    proj = normalize_rows(g.forward(emb))
    assert proj.shape == (2, 16)
    assert np.allclose(np.linalg.norm(proj.data, axis=1), 1.0, atol=1e-5)


def test_encoder_rejects_too_small_patches():
    with pytest.raises(ShapeError, match="patch size 32 too small"):
        build_encoder(EncoderConfig(architecture="base", patch_size=32),
                      rng=np.random.default_rng(0))


def test_mirror_flip_is_involutive():
    rng = np.random.default_rng(4)
    patch = rng.random((9, 9))
    for axis in (0, 1):
        assert np.array_equal(mirror_flip(mirror_flip(patch, axis), axis), patch)
    assert np.array_equal(mirror_flip(patch, 1), patch[:, ::-1])


def test_augment_preserves_shape_and_range():
    rng = np.random.default_rng(5)
    patch = rng.random((16, 16)).astype(np.float32)
    out = augment(patch, AugmentationConfig(), rng=np.random.default_rng(0))
    assert out.shape == patch.shape
    assert np.isfinite(out).all()
    assert not np.array_equal(out, patch)


def test_extract_patch_center_and_reflect_padding():
    img = np.arange(100, dtype=np.float64).reshape(10, 10)
    patch = extract_patch(img, (5, 5), 4)
    assert patch.shape == (4, 4)
    assert patch[2, 2] == img[5, 5]
    corner = extract_patch(img, (0, 0), 5)
    assert corner.shape == (5, 5)
    assert corner[2, 2] == img[0, 0]
    # reflect padding mirrors without repeating the edge pixel
    assert corner[1, 2] == img[1, 0]


def test_embed_nodes_flags_missing_sections():
    cfg = EncoderConfig(architecture="res", patch_size=32)
    f, _ = build_encoder(cfg, rng=np.random.default_rng(0))
    rng = np.random.default_rng(6)
    sections = {0: rng.random((40, 40)).astype(np.float32), 1: None}
    section_ids = np.array([0, 1, 0])
    coords = np.array([[20.0, 20.0], [10.0, 10.0], [5.0, 30.0]])
    feats, valid = embed_nodes(f, sections, section_ids, coords, 32)
    assert feats.shape == (3, cfg.embedding_dim)
    assert valid.tolist() == [True, False, True]
    assert np.isnan(feats[1]).all()
    assert np.isfinite(feats[valid]).all()


def test_features_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    feats = rng.normal(size=(5, 8)).astype(np.float32)
    feats[2] = np.nan
    valid = np.array([1, 1, 0, 1, 1], dtype=bool)
    path = tmp_path / "features.bin"
    save_features(path, feats, valid, encoder_hash="abc123")
    f2, v2, h2 = load_features(path)
    assert h2 == "abc123"
    assert np.array_equal(v2, valid)
    assert np.array_equal(f2[valid], feats[valid])
    assert np.isnan(f2[2]).all()
