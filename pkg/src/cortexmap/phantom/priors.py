"""Ground-truth node labels and synthetic anatomical priors for the phantom."""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np
from scipy import ndimage

from ..graph import CortexGraph
from .generate import PhantomDataset


def _canonical_inplane(dataset: PhantomDataset, graph: CortexGraph) -> np.ndarray:
    """Node coordinates pushed back through the recorded jitter transforms,
    i.e. (row, col) in the jitter-free frame."""
    out = np.empty((graph.n_nodes, 2))
    for k in np.unique(graph.section_ids):
        sel = graph.section_ids == k
        inv = dataset.transforms[int(k)].inverse()
        out[sel] = inv.apply(graph.coords[sel])
    return out


def assign_node_labels(dataset: PhantomDataset, graph: CortexGraph) -> np.ndarray:
    """True area label per node from the canonical fold position. Stored on
    the graph and returned."""
    canon = _canonical_inplane(dataset, graph)
    labels = dataset.config.area_of(canon[:, 1]).astype(np.int32)
    graph.labels = labels
    return labels


def border_mask(dataset: PhantomDataset, graph: CortexGraph,
                radius_px: float) -> np.ndarray:
    """Nodes within `radius_px` (canonical columns) of an internal area border."""
    canon = _canonical_inplane(dataset, graph)
    bounds = dataset.config.area_boundaries()
    dist = np.abs(canon[:, 1][:, None] - bounds[None, :]).min(axis=1)
    return dist < radius_px


def synth_priors(dataset: PhantomDataset, graph: CortexGraph,
                 blur_radius: float = 6.0, noise_std: float = 0.1,
                 n_dims: Optional[int] = None, seed: int = 0,
                 attach: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """Per-node probabilistic-map vectors h^P and canonical coordinates h^C.

    h^P: one-hot of the true area, blurred along the fold, plus clipped
    noise, min-max normalized per dimension. Zero blur and noise leave it an
    exact one-hot. h^C: jitter-free position scaled to [-1, 1]^3.
    """
    cfg = dataset.config
    rng = np.random.default_rng(seed)
    canon = _canonical_inplane(dataset, graph)
    cols = np.clip(canon[:, 1], 0, cfg.resolution - 1e-9)
    labels = cfg.area_of(cols)

    n = graph.n_nodes
    if blur_radius > 0:
        # blur the per-area indicator along the fold axis, then sample
        grid = np.arange(cfg.resolution, dtype=np.float64)
        onehot_cols = np.zeros((cfg.n_areas, cfg.resolution))
        onehot_cols[cfg.area_of(grid), np.arange(cfg.resolution)] = 1.0
        blurred = ndimage.gaussian_filter1d(onehot_cols, sigma=blur_radius,
                                            axis=1, mode="nearest")
        h_pm = np.stack([np.interp(cols, grid, blurred[a])
                         for a in range(cfg.n_areas)], axis=1)
    else:
        h_pm = np.zeros((n, cfg.n_areas))
        h_pm[np.arange(n), labels] = 1.0
    if noise_std > 0:
        h_pm = np.clip(h_pm + rng.normal(0, noise_std, h_pm.shape), 0.0, 1.0)
    lo = h_pm.min(axis=0)
    span = h_pm.max(axis=0) - lo
    scaled = (h_pm - lo) / np.where(span > 0, span, 1.0)
    h_pm = np.where(span > 0, scaled, h_pm)
    if n_dims is not None:
        if n_dims < cfg.n_areas:
            raise ValueError(f"n_dims {n_dims} below area count {cfg.n_areas}")
        h_pm = np.pad(h_pm, ((0, 0), (0, n_dims - cfg.n_areas)))

    extent = cfg.resolution - 1
    z_extent = max(dataset.n_sections - 1, 1)
    h_co = np.column_stack([
        2 * canon[:, 0] / extent - 1,
        2 * canon[:, 1] / extent - 1,
        2 * graph.section_ids / z_extent - 1,
    ])

    h_pm = h_pm.astype(np.float32)
    h_co = h_co.astype(np.float32)
    if attach:
        graph.features["pm"] = h_pm
        graph.features["co"] = h_co
    return h_pm, h_co
