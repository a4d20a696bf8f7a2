"""The attributed cortex graph and its on-disk container."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

SPLIT_CODES = {"train": 0, "test": 1, "unseen": 2, "unlabeled": 3}
SPLIT_NAMES = {v: k for k, v in SPLIT_CODES.items()}
UNLABELED = -1


@dataclass
class CortexGraph:
    """Nodes with 3D position, section mapping, features, labels and splits.

    Adjacency is a symmetric edge list without self-loops; node ids are
    dense in [0, n).
    """

    positions: np.ndarray  # (n, 3) float64 µm
    edges: np.ndarray  # (m, 2) int64, each row sorted, unique
    section_ids: np.ndarray  # (n,) int32
    coords: np.ndarray  # (n, 2) float64, p_u in section pixels
    labels: Optional[np.ndarray] = None  # (n,) int32, -1 unlabeled
    splits: Optional[np.ndarray] = None  # (n,) int8 codes
    features: Dict[str, np.ndarray] = field(default_factory=dict)
    feature_valid: Optional[np.ndarray] = None  # (n,) bool for "cy"

    def __post_init__(self):
        n = len(self.positions)
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(n, 3)
        self.section_ids = np.asarray(self.section_ids, dtype=np.int32)
        self.coords = np.asarray(self.coords, dtype=np.float64).reshape(n, 2)
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            if edges.min() < 0 or edges.max() >= n:
                raise ValueError("edge endpoint out of range")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ValueError("self-loops are not allowed")
            edges = np.unique(np.sort(edges, axis=1), axis=0)
        self.edges = edges
        if self.labels is None:
            self.labels = np.full(n, UNLABELED, dtype=np.int32)
        else:
            self.labels = np.asarray(self.labels, dtype=np.int32)
        if self.splits is None:
            self.splits = np.full(n, SPLIT_CODES["unlabeled"], dtype=np.int8)
        else:
            self.splits = np.asarray(self.splits, dtype=np.int8)
        self._adj = None

    @property
    def n_nodes(self):
        return len(self.positions)

    @property
    def n_edges(self):
        return len(self.edges)

    def num_classes(self) -> int:
        labeled = self.labels[self.labels >= 0]
        return int(labeled.max()) + 1 if labeled.size else 0

    def adjacency(self):
        """CSR neighbor lists (indptr, indices), cached."""
        if self._adj is None:
            n = self.n_nodes
            src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
            dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
            order = np.lexsort((dst, src))
            indices = dst[order]
            deg = np.bincount(src, minlength=n)
            indptr = np.zeros(n + 1, dtype=np.int64)
            np.cumsum(deg, out=indptr[1:])
            self._adj = (indptr, indices)
        return self._adj

    def neighbors(self, u: int) -> np.ndarray:
        indptr, indices = self.adjacency()
        return indices[indptr[u]:indptr[u + 1]]

    def split_mask(self, split: str) -> np.ndarray:
        return self.splits == SPLIT_CODES[split]


def split_nodes(graph: CortexGraph, section_split: dict) -> CortexGraph:
    """Tag each node with its section's split; the split is by section.

    `section_split` maps section id -> split name. Every section present in
    the graph must be assigned.
    """
    present = np.unique(graph.section_ids)
    missing = [int(s) for s in present if int(s) not in section_split]
    if missing:
        raise ValueError(f"sections without split assignment: {missing}")
    bad = {s: v for s, v in section_split.items() if v not in SPLIT_CODES}
    if bad:
        raise ValueError(f"unknown split names: {bad}")
    codes = np.array([SPLIT_CODES[section_split[int(s)]]
                      for s in graph.section_ids], dtype=np.int8)
    graph.splits = codes
    return graph


def save_graph(path, graph: CortexGraph):
    """JSON header + binary blocks (sorted edge list, attribute arrays)."""
    blocks = []

    def block(name, arr, dtype):
        arr = np.ascontiguousarray(arr, dtype=dtype)
        blocks.append((name, arr, np.dtype(dtype).str))

    block("edges", graph.edges, "<u4")
    block("positions", graph.positions, "<f8")
    block("section_ids", graph.section_ids, "<i4")
    block("coords", graph.coords, "<f8")
    block("labels", graph.labels, "<i4")
    block("splits", graph.splits, "i1")
    if graph.feature_valid is not None:
        block("feature_valid", graph.feature_valid.astype(np.uint8), "u1")
    for name in sorted(graph.features):
        block(f"feature:{name}", graph.features[name], "<f4")

    header = {"format": "cortexmap-graph-v1",
              "n_nodes": graph.n_nodes, "n_edges": graph.n_edges,
              "blocks": {}}
    offset = 0
    payload = []
    for name, arr, dstr in blocks:
        header["blocks"][name] = {"offset": offset, "shape": list(arr.shape),
                                  "dtype": dstr}
        payload.append(arr.tobytes())
        offset += arr.nbytes
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(hbytes)))
        fh.write(hbytes)
        for blob in payload:
            fh.write(blob)


def load_graph(path) -> CortexGraph:
    with open(path, "rb") as fh:
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("format") != "cortexmap-graph-v1":
            raise ValueError(f"{path}: not a cortexmap graph")
        data = fh.read()

    def read(name):
        b = header["blocks"][name]
        shape = tuple(b["shape"])
        count = int(np.prod(shape)) if shape else 1
        return np.frombuffer(data, dtype=np.dtype(b["dtype"]), count=count,
                             offset=b["offset"]).reshape(shape).copy()

    features = {}
    feature_valid = None
    for name in header["blocks"]:
        if name.startswith("feature:"):
            features[name.split(":", 1)[1]] = read(name)
    if "feature_valid" in header["blocks"]:
        feature_valid = read("feature_valid").astype(bool)
    return CortexGraph(
        positions=read("positions"),
        edges=read("edges").astype(np.int64),
        section_ids=read("section_ids"),
        coords=read("coords"),
        labels=read("labels"),
        splits=read("splits"),
        features=features,
        feature_valid=feature_valid,
    )
