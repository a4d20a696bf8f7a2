"""Triangle meshes: topology queries, component filtering, OBJ/PLY export."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (n, 3) float64, micrometers
    faces: np.ndarray  # (m, 3) int

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.faces.size and (self.faces.min() < 0
                                or self.faces.max() >= len(self.vertices)):
            raise ValueError("face indices out of range")

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted (u, v) pairs."""
        if not self.faces.size:
            return np.empty((0, 2), dtype=np.int64)
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]],
                            self.faces[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def edge_face_counts(self):
        """(unique edges, number of incident faces per edge)."""
        if not self.faces.size:
            return np.empty((0, 2), dtype=np.int64), np.empty(0, dtype=np.int64)
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]],
                            self.faces[:, [2, 0]]])
        e.sort(axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq, counts

    def is_edge_manifold(self) -> bool:
        _, counts = self.edge_face_counts()
        return bool(np.all(counts <= 2))

    def nonmanifold_edges(self) -> np.ndarray:
        uniq, counts = self.edge_face_counts()
        return uniq[counts > 2]

    def is_watertight(self) -> bool:
        uniq, counts = self.edge_face_counts()
        return len(uniq) > 0 and bool(np.all(counts == 2))

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges()) + self.n_faces

    def edge_lengths(self) -> np.ndarray:
        e = self.edges()
        return np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)

    def face_areas(self) -> np.ndarray:
        a = self.vertices[self.faces[:, 0]]
        b = self.vertices[self.faces[:, 1]]
        c = self.vertices[self.faces[:, 2]]
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def area(self) -> float:
        return float(self.face_areas().sum())

    def vertex_degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_vertices, dtype=np.int64)
        e = self.edges()
        np.add.at(deg, e[:, 0], 1)
        np.add.at(deg, e[:, 1], 1)
        return deg

    def vertex_components(self) -> np.ndarray:
        """Connected-component id per vertex (edge connectivity)."""
        e = self.edges()
        n = self.n_vertices
        if not e.size:
            return np.arange(n)
        adj = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
        _, comp = connected_components(adj, directed=False)
        return comp

    def drop_degenerate_faces(self, min_area: float = 0.0) -> "TriangleMesh":
        keep = self.face_areas() > min_area
        return TriangleMesh(self.vertices, self.faces[keep]).compact()

    def compact(self) -> "TriangleMesh":
        """Drop unreferenced vertices and reindex faces densely."""
        used = np.unique(self.faces) if self.faces.size else np.empty(0, dtype=np.int64)
        remap = np.full(self.n_vertices, -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        return TriangleMesh(self.vertices[used],
                            remap[self.faces] if self.faces.size else self.faces)


def filter_components(mesh: TriangleMesh, min_vertices: int):
    """Remove connected components with fewer than `min_vertices` vertices.

    Returns (filtered mesh, number of components kept). An empty result is
    allowed; callers should treat it as a warning condition.
    """
    if min_vertices <= 0:
        comp = mesh.vertex_components()
        return mesh, len(np.unique(comp)) if mesh.n_vertices else 0
    comp = mesh.vertex_components()
    sizes = np.bincount(comp)
    keep_comp = np.flatnonzero(sizes >= min_vertices)
    keep_vertex = np.isin(comp, keep_comp)
    keep_face = keep_vertex[mesh.faces].all(axis=1)
    out = TriangleMesh(mesh.vertices, mesh.faces[keep_face]).compact()
    return out, len(keep_comp)


def split_by_plane(mesh: TriangleMesh, point, normal):
    """Split into (positive-side, negative-side) meshes by a cutting plane.

    Faces whose vertices straddle the plane are dropped.
    """
    point = np.asarray(point, dtype=np.float64)
    normal = np.asarray(normal, dtype=np.float64)
    side = (mesh.vertices - point) @ normal
    pos = side[mesh.faces].min(axis=1) >= 0
    neg = side[mesh.faces].max(axis=1) < 0
    return (TriangleMesh(mesh.vertices, mesh.faces[pos]).compact(),
            TriangleMesh(mesh.vertices, mesh.faces[neg]).compact())


def save_obj(path, mesh: TriangleMesh):
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.6f} {v[1]:.6f} {v[2]:.6f}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def load_obj(path) -> TriangleMesh:
    verts, faces = [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    return TriangleMesh(np.asarray(verts, dtype=np.float64),
                        np.asarray(faces, dtype=np.int64).reshape(-1, 3))


def save_ply(path, mesh: TriangleMesh, colors: np.ndarray = None):
    """Binary little-endian PLY, optionally with per-vertex uchar RGB."""
    n, m = mesh.n_vertices, mesh.n_faces
    has_color = colors is not None
    if has_color:
        colors = np.ascontiguousarray(colors, dtype=np.uint8)
        if colors.shape != (n, 3):
            raise ValueError(f"colors must be ({n}, 3) uint8, got {colors.shape}")
    header = ["ply", "format binary_little_endian 1.0",
              f"element vertex {n}",
              "property float x", "property float y", "property float z"]
    if has_color:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header += [f"element face {m}", "property list uchar int vertex_indices",
               "end_header"]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if has_color:
            vdt = np.dtype([("xyz", "<f4", 3), ("rgb", np.uint8, 3)])
            varr = np.empty(n, dtype=vdt)
            varr["xyz"] = mesh.vertices.astype("<f4")
            varr["rgb"] = colors
        else:
            varr = mesh.vertices.astype("<f4")
        fh.write(varr.tobytes())
        fdt = np.dtype([("count", np.uint8), ("idx", "<i4", 3)])
        farr = np.empty(m, dtype=fdt)
        farr["count"] = 3
        farr["idx"] = mesh.faces.astype("<i4")
        fh.write(farr.tobytes())


def load_ply(path):
    """Read a PLY written by save_ply; returns (mesh, colors or None)."""
    with open(path, "rb") as fh:
        header_lines = []
        while True:
            line = fh.readline().decode("ascii").strip()
            header_lines.append(line)
            if line == "end_header":
                break
        n = m = 0
        has_color = any("red" in l for l in header_lines)
        for l in header_lines:
            if l.startswith("element vertex"):
                n = int(l.split()[-1])
            elif l.startswith("element face"):
                m = int(l.split()[-1])
        if has_color:
            vdt = np.dtype([("xyz", "<f4", 3), ("rgb", np.uint8, 3)])
        else:
            vdt = np.dtype([("xyz", "<f4", 3)])
        varr = np.frombuffer(fh.read(n * vdt.itemsize), dtype=vdt)
        fdt = np.dtype([("count", np.uint8), ("idx", "<i4", 3)])
        farr = np.frombuffer(fh.read(m * fdt.itemsize), dtype=fdt)
    mesh = TriangleMesh(varr["xyz"].astype(np.float64), farr["idx"].astype(np.int64))
    colors = varr["rgb"].copy() if has_color else None
    return mesh, colors
