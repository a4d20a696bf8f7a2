"""Interpret a midsurface mesh as an attributed graph."""

from __future__ import annotations

import numpy as np

from ..graph import CortexGraph
from .meshes import TriangleMesh
from .volume import LabelVolume


def mesh_to_graph(mesh: TriangleMesh, volume: LabelVolume):
    """One node per vertex; edges are mesh edges.

    Each node gets the index of its nearest section plane and the 2D section
    coordinate obtained by pushing its in-plane position through that
    section's rigid transform. Vertices whose nearest plane is outside the
    stack are dropped; returns (graph, dropped_count).
    """
    sy, sx, sz = volume.spacing
    n_sections = volume.labels.shape[2]
    verts = mesh.vertices
    sections = np.rint(verts[:, 2] / sz).astype(int)
    keep = (sections >= 0) & (sections < n_sections)
    dropped = int(np.count_nonzero(~keep))

    remap = np.full(len(verts), -1, dtype=np.int64)
    remap[keep] = np.arange(int(keep.sum()))
    edges = mesh.edges()
    edge_keep = keep[edges].all(axis=1)
    edges = remap[edges[edge_keep]]

    kept_verts = verts[keep]
    kept_sections = sections[keep]
    inplane = np.column_stack([kept_verts[:, 0] / sy, kept_verts[:, 1] / sx])
    coords = np.empty_like(inplane)
    for k in np.unique(kept_sections):
        sel = kept_sections == k
        coords[sel] = volume.transforms[int(k)].apply(inplane[sel])

    graph = CortexGraph(
        positions=kept_verts,
        edges=edges,
        section_ids=kept_sections.astype(np.int32),
        coords=coords,
    )
    return graph, dropped


def graph_node_positions_from_sections(graph: CortexGraph, volume: LabelVolume):
    """Inverse mapping: p_u back to 3D via the inverse rigid transform."""
    sy, sx, sz = volume.spacing
    out = np.empty((graph.n_nodes, 3))
    for k in np.unique(graph.section_ids):
        sel = graph.section_ids == k
        inplane = volume.transforms[int(k)].inverse().apply(graph.coords[sel])
        out[sel, 0] = inplane[:, 0] * sy
        out[sel, 1] = inplane[:, 1] * sx
        out[sel, 2] = k * sz
    return out
