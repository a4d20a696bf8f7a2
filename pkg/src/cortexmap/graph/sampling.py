"""Neighborhood subgraphs and training-node streams."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .store import SPLIT_CODES, CortexGraph


@dataclass
class Subgraph:
    """A center node with its (possibly sampled) K-hop neighborhood.

    `nodes` are global ids, ordered by (hop, id); `edges_local` are induced
    edges in local indices; `hops[i]` is the hop distance of nodes[i].
    """

    center: int
    nodes: np.ndarray
    hops: np.ndarray
    edges_local: np.ndarray
    k: int = 0

    @property
    def center_local(self) -> int:
        return int(np.flatnonzero(self.nodes == self.center)[0])

    @property
    def n_nodes(self):
        return len(self.nodes)


def _induced_edges(graph: CortexGraph, nodes: np.ndarray) -> np.ndarray:
    """Graph edges with both endpoints in `nodes`, as local index pairs."""
    indptr, indices = graph.adjacency()
    local = {int(g): i for i, g in enumerate(nodes)}
    out = []
    for i, g in enumerate(nodes):
        for v in indices[indptr[g]:indptr[g + 1]]:
            j = local.get(int(v))
            if j is not None and i < j:
                out.append((i, j))
    return np.asarray(out, dtype=np.int64).reshape(-1, 2)


def khop_subgraph(graph: CortexGraph, u: int, k: int) -> Subgraph:
    """Exact closed K-hop neighborhood of u with induced edges."""
    if not 0 <= u < graph.n_nodes:
        raise ValueError(f"node {u} out of range")
    if k < 0:
        raise ValueError("k must be >= 0")
    indptr, indices = graph.adjacency()
    hop = {u: 0}
    frontier = [u]
    for depth in range(1, k + 1):
        nxt = []
        for node in frontier:
            for v in indices[indptr[node]:indptr[node + 1]]:
                v = int(v)
                if v not in hop:
                    hop[v] = depth
                    nxt.append(v)
        frontier = nxt
    nodes = np.asarray(sorted(hop, key=lambda n: (hop[n], n)), dtype=np.int64)
    hops = np.asarray([hop[int(n)] for n in nodes], dtype=np.int64)
    return Subgraph(center=u, nodes=nodes, hops=hops,
                    edges_local=_induced_edges(graph, nodes), k=k)


def sample_fixed_neighbors(graph: CortexGraph, u: int, k: int, fanout: int = 3,
                           rng: Optional[np.random.Generator] = None) -> Subgraph:
    """Layered fixed-fanout sampling: per hop, each frontier node contributes
    at most `fanout` uniformly chosen neighbors, without replacement."""
    if not 0 <= u < graph.n_nodes:
        raise ValueError(f"node {u} out of range")
    if fanout < 1:
        raise ValueError("fanout must be >= 1")
    rng = rng or np.random.default_rng(0)
    indptr, indices = graph.adjacency()
    hop = {u: 0}
    frontier = [u]
    for depth in range(1, k + 1):
        nxt = []
        for node in frontier:
            nbrs = indices[indptr[node]:indptr[node + 1]]
            if len(nbrs) > fanout:
                nbrs = rng.choice(nbrs, size=fanout, replace=False)
            for v in np.sort(nbrs):
                v = int(v)
                if v not in hop:
                    hop[v] = depth
                    nxt.append(v)
        frontier = nxt
    nodes = np.asarray(sorted(hop, key=lambda n: (hop[n], n)), dtype=np.int64)
    hops = np.asarray([hop[int(n)] for n in nodes], dtype=np.int64)
    return Subgraph(center=u, nodes=nodes, hops=hops,
                    edges_local=_induced_edges(graph, nodes), k=k)


def balanced_node_stream(graph: CortexGraph, split: str = "train",
                         rng: Optional[np.random.Generator] = None,
                         exclude_invalid_features: bool = True,
                         chunk: int = 4096) -> Iterator[int]:
    """Infinite stream of node ids drawn with probability ∝ 1/class count."""
    rng = rng or np.random.default_rng(0)
    mask = graph.splits == SPLIT_CODES[split]
    mask &= graph.labels >= 0
    if exclude_invalid_features and graph.feature_valid is not None:
        mask &= graph.feature_valid
    pool = np.flatnonzero(mask)
    if pool.size == 0:
        raise ValueError(f"split {split!r} has no eligible labeled nodes")
    n_classes = graph.num_classes()
    counts = np.bincount(graph.labels[pool], minlength=n_classes)
    absent = np.flatnonzero(counts == 0)
    if absent.size:
        raise ValueError(
            f"classes absent from split {split!r}: {absent.tolist()}")
    weights = 1.0 / counts[graph.labels[pool]]
    weights /= weights.sum()
    while True:
        draws = rng.choice(pool, size=chunk, p=weights)
        yield from (int(d) for d in draws)
