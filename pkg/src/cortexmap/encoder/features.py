"""Node feature extraction and the on-disk feature container."""

from __future__ import annotations

import json
import struct
from typing import Mapping, Optional

import numpy as np

from ..autodiff import Tensor, no_grad


def extract_patch(image: np.ndarray, center: np.ndarray, patch_size: int) -> np.ndarray:
    """Cut a patch centered at a (row, col) coordinate, mirror-padding borders."""
    half = patch_size // 2
    padded = np.pad(image, half, mode="reflect")
    r = int(round(float(center[0]))) + half
    c = int(round(float(center[1]))) + half
    r0, c0 = r - half, c - half
    patch = padded[r0:r0 + patch_size, c0:c0 + patch_size]
    if patch.shape != (patch_size, patch_size):
        # center outside the image: pad further
        padded = np.pad(image, patch_size, mode="reflect")
        r0 = int(round(float(center[0]))) + patch_size - half
        c0 = int(round(float(center[1]))) + patch_size - half
        patch = padded[r0:r0 + patch_size, c0:c0 + patch_size]
    return np.ascontiguousarray(patch)


def embed_nodes(f, sections: Mapping[int, Optional[np.ndarray]],
                section_ids: np.ndarray, coords: np.ndarray, patch_size: int,
                batch_size: int = 256, dtype=np.float32):
    """Compute one embedding per node from a patch around its 2D coordinate.

    Returns (features, valid): nodes whose section image is missing are
    flagged invalid, their feature row is NaN.
    """
    section_ids = np.asarray(section_ids)
    coords = np.asarray(coords)
    n = section_ids.shape[0]
    valid = np.array([sections.get(int(s)) is not None for s in section_ids])

    dim = None
    feats = None
    idx_valid = np.flatnonzero(valid)
    for start in range(0, idx_valid.size, batch_size):
        chunk = idx_valid[start:start + batch_size]
        batch = np.stack([
            extract_patch(sections[int(section_ids[i])], coords[i], patch_size)
            for i in chunk
        ]).astype(dtype)[:, None, :, :]
        with no_grad():
            h = f.forward(Tensor(batch), train=False).data
        if feats is None:
            dim = h.shape[1]
            feats = np.full((n, dim), np.nan, dtype=dtype)
        feats[chunk] = h
    if feats is None:
        raise ValueError("no node has a section image; nothing to embed")
    return feats, valid


def save_features(path, features: np.ndarray, valid: np.ndarray,
                  encoder_hash: str = ""):
    """Write features: JSON header + float32 rows + uint8 validity flags."""
    features = np.ascontiguousarray(features, dtype="<f4")
    valid = np.ascontiguousarray(valid, dtype=np.uint8)
    header = {
        "format": "cortexmap-features-v1",
        "node_count": int(features.shape[0]),
        "dim": int(features.shape[1]),
        "encoder_hash": encoder_hash,
        "blocks": {
            "features": {"offset": 0, "nbytes": features.nbytes},
            "valid": {"offset": features.nbytes, "nbytes": valid.nbytes},
        },
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(hbytes)))
        fh.write(hbytes)
        fh.write(features.tobytes())
        fh.write(valid.tobytes())


def load_features(path):
    with open(path, "rb") as fh:
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("format") != "cortexmap-features-v1":
            raise ValueError(f"{path}: not a cortexmap feature file")
        data = fh.read()
    n, dim = header["node_count"], header["dim"]
    fb = header["blocks"]["features"]
    vb = header["blocks"]["valid"]
    features = np.frombuffer(data, dtype="<f4", count=n * dim,
                             offset=fb["offset"]).reshape(n, dim).copy()
    valid = np.frombuffer(data, dtype=np.uint8, count=n,
                          offset=vb["offset"]).astype(bool)
    return features, valid, header["encoder_hash"]
