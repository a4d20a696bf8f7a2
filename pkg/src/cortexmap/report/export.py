"""Colored-mesh export of annotations or predictions."""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..mesh import TriangleMesh
from ..mesh.meshes import save_ply

NEUTRAL_COLOR = (180, 180, 180)  # unlabeled vertices


def label_palette(n_classes: int) -> np.ndarray:
    """Fixed, well-spread RGB palette (uint8), one row per class."""
    import colorsys

    rgb = [colorsys.hsv_to_rgb((c * 0.61803398875) % 1.0, 0.75, 0.95)
           for c in range(n_classes)]
    return np.round(np.asarray(rgb) * 255).astype(np.uint8)


def export_colored_mesh(path, mesh: TriangleMesh, labels: np.ndarray,
                        palette: Optional[np.ndarray] = None) -> np.ndarray:
    """Write a binary PLY with one color per vertex; label -1 renders in the
    neutral color so sparse annotations appear as stripes. Returns the
    colors written."""
    labels = np.asarray(labels)
    if labels.shape != (mesh.n_vertices,):
        raise ValueError(
            f"{labels.shape[0] if labels.ndim else 0} labels for "
            f"{mesh.n_vertices} vertices")
    if palette is None:
        n_classes = int(labels.max()) + 1 if (labels >= 0).any() else 1
        palette = label_palette(n_classes)
    colors = np.empty((mesh.n_vertices, 3), dtype=np.uint8)
    colors[:] = NEUTRAL_COLOR
    lab = labels >= 0
    if lab.any():
        if labels[lab].max() >= len(palette):
            raise ValueError("label outside the palette range")
        colors[lab] = palette[labels[lab]]
    save_ply(path, mesh, colors=colors)
    return colors
