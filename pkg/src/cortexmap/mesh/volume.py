"""Labeled voxel volumes reconstructed from section stacks."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .transforms import RigidTransform2D

BACKGROUND, WHITE, GRAY = 0, 1, 2


@dataclass
class LabelVolume:
    """Voxel labels (rows, cols, sections) with spacing in micrometers.

    `transforms[k]` maps volume-frame in-plane pixel coordinates to section
    k's pixel coordinates. `missing[k]` marks sections that had no image and
    were filled from a neighbor.
    """

    labels: np.ndarray  # uint8 (H, W, K)
    spacing: tuple  # (row µm, col µm, section thickness µm)
    transforms: list = field(default_factory=list)
    missing: Optional[np.ndarray] = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.labels.ndim != 3:
            raise ValueError(f"labels must be 3D, got shape {self.labels.shape}")
        k = self.labels.shape[2]
        if not self.transforms:
            self.transforms = [RigidTransform2D.identity() for _ in range(k)]
        if len(self.transforms) != k:
            raise ValueError(f"{len(self.transforms)} transforms for {k} sections")
        if self.missing is None:
            self.missing = np.zeros(k, dtype=bool)

    @property
    def shape(self):
        return self.labels.shape

    def check_gray_connectivity(self):
        """Report gray components lacking a 26-connected path to both WM and
        background. Returns (num_components, num_bad)."""
        struct3 = ndimage.generate_binary_structure(3, 3)
        comp, n = ndimage.label(self.labels == GRAY, structure=struct3)
        bad = 0
        for c in range(1, n + 1):
            mask = comp == c
            dil = ndimage.binary_dilation(mask, structure=struct3)
            ring = dil & ~mask
            touches_white = np.any(self.labels[ring] == WHITE)
            touches_bg = np.any(self.labels[ring] == BACKGROUND)
            if not (touches_white and touches_bg):
                bad += 1
        return n, bad


def reconstruct_stack(sections: Sequence[Optional[np.ndarray]],
                      transforms: Sequence[RigidTransform2D],
                      spacing=(1.0, 1.0, 1.0),
                      shape: Optional[tuple] = None) -> LabelVolume:
    """Resample per-section label images into a common volume frame.

    Voxel (i, j, k) takes the label of section k at transforms[k]((i, j)),
    nearest-neighbor. Missing sections (None) are filled by copying the
    nearest valid section's resampled labels.
    """
    if len(sections) != len(transforms):
        raise ValueError("one transform per section required")
    valid = [i for i, s in enumerate(sections) if s is not None]
    if not valid:
        raise ValueError("all sections are missing; nothing to reconstruct")
    shapes = {sections[i].shape for i in valid}
    if len(shapes) != 1:
        raise ValueError(f"inconsistent section shapes: {sorted(shapes)}")
    sec_shape = shapes.pop()
    if shape is None:
        shape = sec_shape

    h, w = shape
    k = len(sections)
    grid = np.stack(np.meshgrid(np.arange(h), np.arange(w), indexing="ij"),
                    axis=-1).reshape(-1, 2).astype(np.float64)
    planes = np.zeros((h, w, k), dtype=np.uint8)
    missing = np.zeros(k, dtype=bool)
    for idx in range(k):
        src = idx if sections[idx] is not None else min(
            valid, key=lambda v: abs(v - idx))
        missing[idx] = sections[idx] is None
        pts = transforms[src].apply(grid) if missing[idx] else transforms[idx].apply(grid)
        rows = np.rint(pts[:, 0]).astype(int)
        cols = np.rint(pts[:, 1]).astype(int)
        inside = (rows >= 0) & (rows < sec_shape[0]) & (cols >= 0) & (cols < sec_shape[1])
        plane = np.zeros(h * w, dtype=np.uint8)
        plane[inside] = sections[src][rows[inside], cols[inside]]
        planes[:, :, idx] = plane.reshape(h, w)
    return LabelVolume(labels=planes, spacing=tuple(spacing),
                       transforms=list(transforms), missing=missing)


def save_volume(path, volume: LabelVolume):
    """Raw little-endian labels preceded by a JSON header."""
    labels = np.ascontiguousarray(volume.labels, dtype=np.uint8)
    header = {
        "format": "cortexmap-volume-v1",
        "dims": list(labels.shape),
        "spacing_um": list(volume.spacing),
        "transforms": [t.to_json() for t in volume.transforms],
        "missing": volume.missing.astype(int).tolist(),
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(hbytes)))
        fh.write(hbytes)
        fh.write(labels.tobytes())


def load_volume(path) -> LabelVolume:
    with open(path, "rb") as fh:
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("format") != "cortexmap-volume-v1":
            raise ValueError(f"{path}: not a cortexmap volume")
        data = fh.read()
    dims = tuple(header["dims"])
    labels = np.frombuffer(data, dtype=np.uint8,
                           count=int(np.prod(dims))).reshape(dims).copy()
    return LabelVolume(
        labels=labels,
        spacing=tuple(header["spacing_um"]),
        transforms=[RigidTransform2D.from_json(t) for t in header["transforms"]],
        missing=np.asarray(header["missing"], dtype=bool),
    )
