"""Minibatch assembly: disjoint unions of per-center subgraphs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..graph import CortexGraph, Subgraph, khop_subgraph, sample_fixed_neighbors


@dataclass
class SubgraphBatch:
    """Several subgraphs packed into one graph with no edges between them.

    `nodes` holds global node ids (concatenated per subgraph), `edges_local`
    indexes into that concatenation, and `centers_local[i]` is the local row
    of the i-th center.
    """

    nodes: np.ndarray
    edges_local: np.ndarray
    centers_local: np.ndarray
    k: int

    @property
    def n_nodes(self):
        return len(self.nodes)


def collate_subgraphs(subgraphs: Sequence[Subgraph]) -> SubgraphBatch:
    if not subgraphs:
        raise ValueError("cannot collate an empty list of subgraphs")
    nodes, edges, centers = [], [], []
    offset = 0
    for sg in subgraphs:
        nodes.append(sg.nodes)
        if len(sg.edges_local):
            edges.append(sg.edges_local + offset)
        centers.append(offset + sg.center_local)
        offset += sg.n_nodes
    edges_cat = (np.concatenate(edges) if edges
                 else np.empty((0, 2), dtype=np.int64))
    return SubgraphBatch(nodes=np.concatenate(nodes), edges_local=edges_cat,
                         centers_local=np.asarray(centers, dtype=np.int64),
                         k=min(sg.k for sg in subgraphs))


def sample_batch(graph: CortexGraph, centers: Sequence[int], k: int,
                 fanout: Optional[int] = None,
                 rng: Optional[np.random.Generator] = None) -> SubgraphBatch:
    """Subgraph per center (fixed-fanout when `fanout` is set, else exact
    k-hop), packed into one disjoint union."""
    rng = rng or np.random.default_rng(0)
    subs = []
    for u in centers:
        if fanout is None:
            subs.append(khop_subgraph(graph, int(u), k))
        else:
            subs.append(sample_fixed_neighbors(graph, int(u), k, fanout, rng))
    return collate_subgraphs(subs)
