"""Synthetic cortical phantom: a folded, textured, labeled section stack.

This is not a histology simulation. The "cortex" is a smooth sine-folded
band of gray matter with white matter on one side and background on the
other; each area along the band gets its own layered dot texture, chosen so
patch statistics separate areas without being trivial.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..mesh import BACKGROUND, GRAY, WHITE, RigidTransform2D
from ..encoder.features import extract_patch

DOT_INTENSITY = 0.30
GRAY_INTENSITY = 0.68
WHITE_INTENSITY = 0.88
BACKGROUND_INTENSITY = 0.05


@dataclass(frozen=True)
class AreaTexture:
    """Layered dot texture: one (density, relative width) pair per layer
    plus a dot radius in pixels. Densities are dots per pixel of band area."""

    densities: tuple
    widths: tuple
    radius: int = 0  # 0 = single-pixel dots

    def __post_init__(self):
        if len(self.densities) != len(self.widths) or not self.densities:
            raise ValueError("densities and widths must be equal-length, nonempty")
        if abs(sum(self.widths) - 1.0) > 1e-6:
            raise ValueError("layer widths must sum to 1")


def default_textures(n_areas: int) -> List[AreaTexture]:
    """Deterministic pairwise-distinct texture assignment.

    Every area gets a distinct target dot coverage (evenly spaced), so patch
    mean/variance statistics separate all pairs; the laminar profile varies
    the density with intra-band depth without changing the area average.
    """
    coverage = np.linspace(0.05, 0.75, n_areas)
    # symmetric two-layer profiles: any depth-centered window weights the
    # layers equally, so patch means track the calibrated coverage
    profiles = [(1.15, 0.85), (0.85, 1.15), (1.2, 0.8), (0.8, 1.2)]
    widths = [(0.5, 0.5), (0.5, 0.5), (0.5, 0.5), (0.5, 0.5)]
    out = []
    for a in range(n_areas):
        prof = np.asarray(profiles[a % len(profiles)])
        w = np.asarray(widths[a % len(widths)])
        # bisect for the dot rate whose width-averaged pixel coverage hits
        # the target (coverage saturates as 1 - exp(-rate))
        lo, hi = 0.0, 12.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            got = float(np.sum(w * (1.0 - np.exp(-mid * prof))))
            lo, hi = (mid, hi) if got < coverage[a] else (lo, mid)
        out.append(AreaTexture(
            densities=tuple(lo * m for m in prof),
            widths=tuple(w),
            radius=0,
        ))
    return out


@dataclass
class PhantomConfig:
    n_areas: int = 10
    n_sections: int = 24
    resolution: int = 420  # square sections, pixels
    spacing_um: float = 1.0  # in-plane micrometers per pixel
    thickness_um: float = 2.0  # section thickness
    band_thickness_px: float = 32.0
    fold_amplitude_px: float = 30.0
    folds: float = 1.2
    fold_phase_per_section: float = 0.06
    textures: Optional[List[AreaTexture]] = None
    jitter_angle_max: float = 0.03  # radians
    jitter_shift_max: float = 3.0  # pixels
    missing_fraction: float = 0.0
    intensity_noise: float = 0.03
    seed: int = 0

    def __post_init__(self):
        if self.n_areas < 2:
            raise ValueError("at least 2 areas required")
        if self.band_thickness_px < 3:
            raise ValueError(
                f"band thickness {self.band_thickness_px} px is below 3 px; "
                "the interior potential field would be meaningless")
        if self.textures is None:
            self.textures = default_textures(self.n_areas)
        if len(self.textures) != self.n_areas:
            raise ValueError(f"{len(self.textures)} textures for {self.n_areas} areas")
        seen = {}
        for a, t in enumerate(self.textures):
            key = (t.densities, t.widths, t.radius)
            if key in seen:
                raise ValueError(f"areas {seen[key]} and {a} share texture parameters")
            seen[key] = a

    def mid_row(self, cols, section):
        """Canonical-frame row of the band center along the fold."""
        w = self.resolution
        phase = 2 * np.pi * self.folds * np.asarray(cols, dtype=np.float64) / w
        phase = phase + self.fold_phase_per_section * section
        return self.resolution / 2 + self.fold_amplitude_px * np.sin(phase)

    def area_of(self, cols):
        """Area index from the canonical column (areas tile the fold length)."""
        cols = np.asarray(cols, dtype=np.float64)
        idx = np.floor(cols * self.n_areas / self.resolution).astype(np.int64)
        return np.clip(idx, 0, self.n_areas - 1)

    def area_boundaries(self):
        """Canonical columns of the internal area borders."""
        w = self.resolution
        return np.array([i * w / self.n_areas for i in range(1, self.n_areas)])


@dataclass
class PhantomDataset:
    """Rendered stack with ground truth; entry k is None when section k is
    missing. Transforms map canonical in-plane coordinates to section pixels."""

    config: PhantomConfig
    images: List[Optional[np.ndarray]]
    label_maps: List[Optional[np.ndarray]]
    area_maps: List[Optional[np.ndarray]]
    transforms: List[RigidTransform2D]
    missing: np.ndarray

    @property
    def n_sections(self):
        return len(self.images)

    @property
    def spacing(self):
        s = self.config.spacing_um
        return (s, s, self.config.thickness_um)

    def sections_dict(self):
        return {k: img for k, img in enumerate(self.images)}


def _render_section(config: PhantomConfig, k: int, transform: RigidTransform2D,
                    rng: np.random.Generator):
    n = config.resolution
    t = config.band_thickness_px
    grid = np.stack(np.meshgrid(np.arange(n), np.arange(n), indexing="ij"),
                    axis=-1).reshape(-1, 2).astype(np.float64)
    canon = transform.inverse().apply(grid)
    cr, cc = canon[:, 0], canon[:, 1]

    d = cr - config.mid_row(cc, k)
    inside_canvas = (cr >= 0) & (cr < n) & (cc >= 0) & (cc < n)
    labels = np.where(d > t / 2, WHITE,
                      np.where(d < -t / 2, BACKGROUND, GRAY)).astype(np.uint8)
    labels[~inside_canvas] = BACKGROUND
    areas = np.where(labels == GRAY, config.area_of(cc), -1).astype(np.int16)

    img = np.choose(labels, [BACKGROUND_INTENSITY, WHITE_INTENSITY,
                             GRAY_INTENSITY]).astype(np.float64)
    img += rng.normal(0, config.intensity_noise, img.shape)
    img = img.reshape(n, n)
    labels = labels.reshape(n, n)
    areas = areas.reshape(n, n)

    # stamp laminar dots, sampled in the canonical frame per area and layer
    for a, tex in enumerate(config.textures):
        c0 = a * n / config.n_areas
        c1 = (a + 1) * n / config.n_areas
        depth_lo = 0.0
        for dens, width in zip(tex.densities, tex.widths):
            depth_hi = depth_lo + width
            count = rng.poisson(dens * (c1 - c0) * t * width)
            if count:
                cx = rng.uniform(c0, c1, count)
                dep = rng.uniform(depth_lo, depth_hi, count)
                cy = config.mid_row(cx, k) + (dep - 0.5) * t
                centers = transform.apply(np.column_stack([cy, cx]))
                _stamp_disks(img, centers, tex.radius)
            depth_lo = depth_hi
    img = np.clip(img, 0.0, 1.0)
    # quantize to the 8-bit grid so PNG round trips are exact
    img = (np.round(img * 255.0) / 255.0).astype(np.float32)
    return img, labels, areas


def _stamp_disks(img: np.ndarray, centers: np.ndarray, radius: int):
    n = img.shape[0]
    dy, dx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    disk = dy * dy + dx * dx <= radius * radius
    offs = np.column_stack([dy[disk], dx[disk]])
    px = np.rint(centers).astype(np.int64)
    pts = (px[:, None, :] + offs[None, :, :]).reshape(-1, 2)
    ok = (pts[:, 0] >= 0) & (pts[:, 0] < n) & (pts[:, 1] >= 0) & (pts[:, 1] < n)
    pts = pts[ok]
    img[pts[:, 0], pts[:, 1]] = DOT_INTENSITY


def generate_phantom(config: PhantomConfig) -> PhantomDataset:
    """Render the full stack; a pure function of the config (and its seed)."""
    master = np.random.default_rng(config.seed)
    k = config.n_sections
    angles = master.uniform(-config.jitter_angle_max, config.jitter_angle_max, k)
    shifts = master.uniform(-config.jitter_shift_max, config.jitter_shift_max, (k, 2))
    center = (config.resolution / 2, config.resolution / 2)
    transforms = [RigidTransform2D.about_center(angles[i], shifts[i], center)
                  for i in range(k)]

    n_missing = int(round(config.missing_fraction * k))
    missing = np.zeros(k, dtype=bool)
    if n_missing:
        # keep the first and last section so reconstruction stays anchored
        candidates = np.arange(1, k - 1)
        missing[master.choice(candidates, size=min(n_missing, candidates.size),
                              replace=False)] = True

    images, label_maps, area_maps = [], [], []
    for i in range(k):
        if missing[i]:
            images.append(None)
            label_maps.append(None)
            area_maps.append(None)
            continue
        rng = np.random.default_rng([config.seed, 1000 + i])
        img, lab, area = _render_section(config, i, transforms[i], rng)
        images.append(img)
        label_maps.append(lab)
        area_maps.append(area)
    return PhantomDataset(config=config, images=images, label_maps=label_maps,
                          area_maps=area_maps, transforms=transforms,
                          missing=missing)


def sample_patches(dataset: PhantomDataset, per_class: int, patch_size: int,
                   rng: Optional[np.random.Generator] = None,
                   depth_band_px: float = 2.0):
    """Labeled training patches for the encoder.

    Candidate centers lie near the band middle and at least half a patch
    away from area borders (canonical frame), so a patch reflects one area's
    texture. Falls back to arbitrary gray-matter pixels of an area only if
    that strip is empty.
    """
    rng = rng or np.random.default_rng(0)
    cfg = dataset.config
    n = cfg.resolution
    valid = [k for k in range(dataset.n_sections) if not dataset.missing[k]]
    margin = patch_size / 2
    grid = np.stack(np.meshgrid(np.arange(n), np.arange(n), indexing="ij"),
                    axis=-1).reshape(-1, 2).astype(np.float64)
    candidates = {a: [] for a in range(cfg.n_areas)}
    for k in valid:
        canon = dataset.transforms[k].inverse().apply(grid)
        cr, cc = canon[:, 0], canon[:, 1]
        d = cr - cfg.mid_row(cc, k)
        area = cfg.area_of(cc)
        c0 = area * n / cfg.n_areas
        c1 = (area + 1) * n / cfg.n_areas
        ok = (np.abs(d) <= depth_band_px) & (cc - c0 >= margin) & (c1 - cc >= margin)
        ok &= (cr >= 0) & (cr < n) & (cc >= 0) & (cc < n)
        idx = np.flatnonzero(ok)
        for a in range(cfg.n_areas):
            sel = idx[area[idx] == a]
            if sel.size:
                rows, cols = sel // n, sel % n
                candidates[a].append(
                    np.column_stack([np.full(sel.size, k), rows, cols]))
    for a in range(cfg.n_areas):
        if candidates[a]:
            continue
        for k in valid:
            rows, cols = np.nonzero(dataset.area_maps[k] == a)
            if rows.size:
                candidates[a].append(
                    np.column_stack([np.full(rows.size, k), rows, cols]))
    patches, labels = [], []
    for a in range(cfg.n_areas):
        if not candidates[a]:
            raise ValueError(f"area {a} has no gray-matter pixels to sample")
        pool = np.concatenate(candidates[a])
        pick = rng.choice(pool.shape[0], size=per_class,
                          replace=pool.shape[0] < per_class)
        for k, r, c in pool[pick]:
            patches.append(extract_patch(dataset.images[k], (r, c), patch_size))
            labels.append(a)
    return (np.stack(patches).astype(np.float32),
            np.asarray(labels, dtype=np.int64))
