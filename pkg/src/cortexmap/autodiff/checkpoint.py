"""Parameter checkpoints.

Layout: 8-byte little-endian header length, UTF-8 JSON header, then a flat
block of little-endian 32-bit floats. The header lists parameter names,
shapes and byte offsets (relative to the start of the data block), plus an
optional free-form "meta" block.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping, Optional

import numpy as np


def save_checkpoint(path, params: Mapping[str, np.ndarray],
                    meta: Optional[dict] = None):
    entries = {}
    offset = 0
    blobs = []
    for name, arr in params.items():
        arr32 = np.ascontiguousarray(arr, dtype="<f4")
        entries[name] = {"shape": list(arr32.shape), "offset": offset}
        blobs.append(arr32.tobytes())
        offset += arr32.nbytes
    header = {"format": "cortexmap-checkpoint-v1", "params": entries}
    if meta is not None:
        header["meta"] = meta
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(hbytes)))
        fh.write(hbytes)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    """Read a checkpoint; returns (params dict of float32 arrays, meta)."""
    path = Path(path)
    with open(path, "rb") as fh:
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("format") != "cortexmap-checkpoint-v1":
            raise ValueError(f"{path}: not a cortexmap checkpoint")
        data = fh.read()
    params = {}
    for name, entry in header["params"].items():
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=start)
        params[name] = arr.reshape(shape).copy()
    return params, header.get("meta")
