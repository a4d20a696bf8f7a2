"""Patch augmentation: rotation, mirroring, translation, intensity, blur, sharpen.

All transforms are deterministic given the passed random generator, and the
result is always clamped back to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass
class AugmentationConfig:
    rotate: bool = True
    max_rotation_deg: float = 180.0
    mirror: bool = True
    translate: bool = True
    max_translation_px: int = 4
    intensity: bool = True
    intensity_scale_range: tuple = (0.85, 1.15)
    intensity_offset_range: tuple = (-0.1, 0.1)
    blur: bool = True
    max_blur_sigma: float = 1.0
    sharpen: bool = True
    max_sharpen_amount: float = 1.0

    @classmethod
    def disabled(cls):
        return cls(rotate=False, mirror=False, translate=False,
                   intensity=False, blur=False, sharpen=False)


def augment(patch: np.ndarray, config: AugmentationConfig,
            rng: np.random.Generator) -> np.ndarray:
    """Apply the enabled random transforms to one 2D grayscale patch."""
    out = np.asarray(patch, dtype=np.float32)
    if out.ndim != 2:
        raise ValueError(f"expected a 2D patch, got shape {out.shape}")
    if config.rotate:
        angle = rng.uniform(-config.max_rotation_deg, config.max_rotation_deg)
        out = ndimage.rotate(out, angle, reshape=False, order=1, mode="mirror")
    if config.mirror:
        if rng.random() < 0.5:
            out = out[::-1, :]
        if rng.random() < 0.5:
            out = out[:, ::-1]
    if config.translate:
        t = config.max_translation_px
        dy, dx = rng.integers(-t, t + 1, size=2)
        out = ndimage.shift(out, (dy, dx), order=1, mode="mirror")
    if config.intensity:
        scale = rng.uniform(*config.intensity_scale_range)
        offset = rng.uniform(*config.intensity_offset_range)
        out = out * scale + offset
    if config.blur:
        sigma = rng.uniform(0.0, config.max_blur_sigma)
        if sigma > 1e-3:
            out = ndimage.gaussian_filter(out, sigma, mode="mirror")
    if config.sharpen:
        amount = rng.uniform(0.0, config.max_sharpen_amount)
        if amount > 1e-3:
            smooth = ndimage.gaussian_filter(out, 1.0, mode="mirror")
            out = out + amount * (out - smooth)
    return np.clip(np.ascontiguousarray(out), 0.0, 1.0)


def mirror_flip(patch: np.ndarray, axis: int) -> np.ndarray:
    """Deterministic mirroring along one axis (its own inverse)."""
    return np.ascontiguousarray(np.flip(patch, axis=axis))
