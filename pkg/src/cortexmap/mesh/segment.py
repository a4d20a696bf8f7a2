"""Section segmentation into background / white matter / gray matter.

Tissue is separated from background with morphological active contours;
the white/gray split inside tissue uses an Otsu threshold on a smoothed
copy of the image (white matter renders brighter and more homogeneous).
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage
from skimage.filters import threshold_otsu
from skimage.segmentation import morphological_chan_vese

from .volume import BACKGROUND, GRAY, WHITE


def segment_section(image: np.ndarray, iterations: int = 35,
                    smoothing: int = 1, wm_threshold: float = None) -> np.ndarray:
    """Label one grayscale section; returns uint8 {0 bg, 1 WM, 2 GM}."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {img.shape}")
    if img.size == 0 or img.std() < 1e-6:
        return np.zeros(img.shape, dtype=np.uint8)

    tissue = morphological_chan_vese(img, num_iter=iterations,
                                     smoothing=smoothing,
                                     init_level_set="checkerboard").astype(bool)
    # the level set is arbitrary up to inversion; tissue is the brighter side
    if img[tissue].mean() < img[~tissue].mean():
        tissue = ~tissue
    tissue = ndimage.binary_fill_holes(tissue)

    labels = np.zeros(img.shape, dtype=np.uint8)
    if not np.any(tissue):
        return labels
    smooth = ndimage.gaussian_filter(img, 2.0)
    vals = smooth[tissue]
    if wm_threshold is None:
        if vals.max() - vals.min() < 1e-6:
            labels[tissue] = GRAY
            return labels
        wm_threshold = threshold_otsu(vals)
    labels[tissue] = np.where(smooth[tissue] > wm_threshold, WHITE, GRAY)
    return labels
