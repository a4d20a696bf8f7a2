"""Synthetic section stacks: determinism, ground truth, priors, sampling."""

import numpy as np
import pytest

from cortexmap.graph import CortexGraph
from cortexmap.mesh import BACKGROUND, GRAY, WHITE, RigidTransform2D
from cortexmap.phantom import (
    AreaTexture,
    PhantomConfig,
    assign_node_labels,
    border_mask,
    default_textures,
    generate_phantom,
    load_phantom,
    sample_patches,
    save_phantom,
    synth_priors,
)


def small_config(**kwargs):
    base = dict(n_areas=3, n_sections=4, resolution=120, seed=5)
    base.update(kwargs)
    return PhantomConfig(**base)


@pytest.fixture(scope="module")
def dataset():
    return generate_phantom(small_config())


def test_generation_is_deterministic():
    a = generate_phantom(small_config())
    b = generate_phantom(small_config())
    for k in range(4):
        assert np.array_equal(a.images[k], b.images[k])
        assert np.array_equal(a.label_maps[k], b.label_maps[k])
        assert np.array_equal(a.area_maps[k], b.area_maps[k])
        assert a.transforms[k].angle == b.transforms[k].angle


def test_seed_changes_the_stack():
    a = generate_phantom(small_config())
    b = generate_phantom(small_config(seed=6))
    assert not np.array_equal(a.images[0], b.images[0])


def test_labels_and_areas_agree(dataset):
    for k in range(4):
        lab, area = dataset.label_maps[k], dataset.area_maps[k]
        assert set(np.unique(lab)) <= {BACKGROUND, WHITE, GRAY}
        # every gray pixel has an area; nothing else does
        assert np.array_equal(area >= 0, lab == GRAY)
        assert area.max() < 3


def test_intensity_separates_compartments(dataset):
    img, lab = dataset.images[0], dataset.label_maps[0]
    assert img.dtype == np.float32
    bg = img[lab == BACKGROUND].mean()
    wm = img[lab == WHITE].mean()
    gm = img[lab == GRAY].mean()
    assert bg < 0.15
    assert wm > 0.8
    assert 0.3 < gm < wm


def test_zero_jitter_gives_identity_transforms():
    cfg = small_config(jitter_angle_max=0.0, jitter_shift_max=0.0)
    ds = generate_phantom(cfg)
    for t in ds.transforms:
        assert t.angle == 0.0
        assert tuple(t.translation) == (0.0, 0.0)


def test_missing_sections_keep_the_stack_ends():
    cfg = small_config(n_sections=8, missing_fraction=0.3)
    ds = generate_phantom(cfg)
    assert ds.missing.sum() >= 1
    assert not ds.missing[0] and not ds.missing[-1]
    for k in np.flatnonzero(ds.missing):
        assert ds.images[k] is None


def test_texture_coverage_matches_targets(dataset):
    cfg = dataset.config
    targets = np.linspace(0.05, 0.75, cfg.n_areas)
    img, lab, area = dataset.images[0], dataset.label_maps[0], dataset.area_maps[0]
    for a, target in enumerate(targets):
        sel = (lab == GRAY) & (area == a)
        dark = (img[sel] < 0.5).mean()  # dots are darker than the gray base
        assert abs(dark - target) < 0.05, f"area {a}: {dark} vs {target}"


def test_textures_must_be_pairwise_distinct():
    t = AreaTexture(densities=(0.1, 0.1), widths=(0.5, 0.5))
    with pytest.raises(ValueError, match="share texture"):
        PhantomConfig(n_areas=2, n_sections=2, resolution=96, textures=[t, t])


def test_default_textures_structure():
    tex = default_textures(5)
    assert len(tex) == 5
    assert len({t.densities for t in tex}) == 5


def test_save_load_round_trip(tmp_path, dataset):
    save_phantom(tmp_path / "ds", dataset)
    back = load_phantom(tmp_path / "ds")
    assert back.config.n_areas == dataset.config.n_areas
    for k in range(4):
        assert np.array_equal(back.images[k], dataset.images[k])
        assert np.array_equal(back.label_maps[k], dataset.label_maps[k])
        assert np.array_equal(back.area_maps[k], dataset.area_maps[k])
        assert np.isclose(back.transforms[k].angle, dataset.transforms[k].angle)


def _midband_graph(ds, n_per_section=40):
    """Nodes on the band center, in section-pixel coordinates."""
    cfg = ds.config
    rng = np.random.default_rng(0)
    cols = np.linspace(8, cfg.resolution - 9, n_per_section)
    positions, coords, sections = [], [], []
    for k in range(cfg.n_sections):
        rows = cfg.mid_row(cols, k)
        canon = np.column_stack([rows, cols])
        sec = ds.transforms[k].apply(canon)
        coords.append(sec)
        sections.extend([k] * len(cols))
        positions.append(np.column_stack([canon, np.full(len(cols), float(k))]))
    return CortexGraph(
        positions=np.vstack(positions),
        edges=np.empty((0, 2)),
        section_ids=np.array(sections, dtype=np.int32),
        coords=np.vstack(coords))


def test_assign_node_labels_matches_area_maps(dataset):
    graph = _midband_graph(dataset)
    labels = assign_node_labels(dataset, graph)
    assert np.array_equal(labels, graph.labels)
    # cross-check against the rendered area maps at the node pixels
    for i in range(graph.n_nodes):
        k = int(graph.section_ids[i])
        r, c = np.rint(graph.coords[i]).astype(int)
        if 0 <= r < 120 and 0 <= c < 120:
            rendered = dataset.area_maps[k][r, c]
            if rendered >= 0:
                assert rendered == labels[i]


def test_border_mask_brackets_boundaries(dataset):
    graph = _midband_graph(dataset)
    mask = border_mask(dataset, graph, radius_px=6.0)
    assert 0 < mask.sum() < graph.n_nodes


def test_perfect_priors_are_one_hot(dataset):
    graph = _midband_graph(dataset)
    assign_node_labels(dataset, graph)
    h_pm, h_co = synth_priors(dataset, graph, blur_radius=0.0, noise_std=0.0)
    assert h_pm.shape == (graph.n_nodes, 3)
    assert np.array_equal(h_pm.argmax(axis=1), graph.labels)
    assert np.allclose(h_pm.max(axis=1), 1.0)
    assert np.allclose(h_pm.sum(axis=1), 1.0)
    assert graph.features["pm"] is h_pm
    assert np.all(h_co >= -1.0) and np.all(h_co <= 1.0)


def test_canonical_coordinates_cancel_jitter():
    cfg = small_config(jitter_angle_max=0.05, jitter_shift_max=4.0)
    ds = generate_phantom(cfg)
    ds0 = generate_phantom(small_config(jitter_angle_max=0.0,
                                        jitter_shift_max=0.0))
    g = _midband_graph(ds)
    g0 = _midband_graph(ds0)
    assign_node_labels(ds, g)
    assign_node_labels(ds0, g0)
    _, co = synth_priors(ds, g, blur_radius=0.0, noise_std=0.0)
    _, co0 = synth_priors(ds0, g0, blur_radius=0.0, noise_std=0.0)
    # same canonical placement regardless of per-section jitter
    assert np.allclose(co, co0, atol=1e-5)
    assert np.array_equal(g.labels, g0.labels)


def test_blur_and_noise_keep_priors_informative(dataset):
    graph = _midband_graph(dataset)
    assign_node_labels(dataset, graph)
    h_pm, _ = synth_priors(dataset, graph, blur_radius=6.0, noise_std=0.1,
                           seed=1, attach=False)
    away = ~border_mask(dataset, graph, radius_px=10.0)
    agree = (h_pm[away].argmax(axis=1) == graph.labels[away]).mean()
    assert agree > 0.9
    assert "pm" not in graph.features or graph.features["pm"] is not h_pm


def test_sample_patches_shapes_labels_and_balance(dataset):
    patches, labels = sample_patches(dataset, per_class=12, patch_size=16,
                                     rng=np.random.default_rng(1))
    assert patches.shape == (36, 16, 16)
    assert patches.dtype == np.float32
    assert patches.min() >= 0.0 and patches.max() <= 1.0
    counts = np.bincount(labels, minlength=3)
    assert counts.tolist() == [12, 12, 12]


def test_sample_patches_classes_are_separable(dataset):
    """Patch means must rank with the per-area dot coverage."""
    patches, labels = sample_patches(dataset, per_class=40, patch_size=16,
                                     rng=np.random.default_rng(2))
    means = [patches[labels == c].mean() for c in range(3)]
    # higher coverage -> darker patches, strictly ordered
    assert means[0] > means[1] > means[2]
