"""Isotropic incremental remeshing.

Per iteration: split edges longer than 4/3 of the target length, collapse
edges shorter than 4/5 of it, flip edges toward valence 6 (4 on the
boundary), then relax vertices tangentially. Edge-manifold input required.
"""

from __future__ import annotations

import numpy as np

from .meshes import TriangleMesh

SPLIT_FACTOR = 4.0 / 3.0
COLLAPSE_FACTOR = 4.0 / 5.0


class _EditMesh:
    """Growable mesh with edge->faces and vertex->faces incidence maps."""

    def __init__(self, mesh: TriangleMesh):
        self.pos = [np.array(v, dtype=np.float64) for v in mesh.vertices]
        self.alive_v = [True] * len(self.pos)
        self.faces = []
        self.edge_faces: dict[tuple, set] = {}
        self.vert_faces: dict[int, set] = {i: set() for i in range(len(self.pos))}
        for tri in mesh.faces:
            self._add_face(tuple(int(x) for x in tri))

    # -- incidence maintenance ----------------------------------------
    def _add_face(self, tri):
        fid = len(self.faces)
        self.faces.append(tri)
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            self.edge_faces.setdefault(_key(a, b), set()).add(fid)
        for v in tri:
            self.vert_faces[v].add(fid)
        return fid

    def _remove_face(self, fid):
        tri = self.faces[fid]
        self.faces[fid] = None
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = _key(a, b)
            fs = self.edge_faces.get(key)
            if fs is not None:
                fs.discard(fid)
                if not fs:
                    del self.edge_faces[key]
        for v in tri:
            self.vert_faces[v].discard(fid)

    def _add_vertex(self, p):
        self.pos.append(np.asarray(p, dtype=np.float64))
        self.alive_v.append(True)
        self.vert_faces[len(self.pos) - 1] = set()
        return len(self.pos) - 1

    # -- queries -------------------------------------------------------
    def length(self, key):
        return float(np.linalg.norm(self.pos[key[0]] - self.pos[key[1]]))

    def neighbors(self, v):
        out = set()
        for fid in self.vert_faces[v]:
            out.update(self.faces[fid])
        out.discard(v)
        return out

    def valence(self, v):
        return len(self.neighbors(v))

    def is_boundary_edge(self, key):
        return len(self.edge_faces.get(key, ())) == 1

    def is_boundary_vertex(self, v):
        for fid in self.vert_faces[v]:
            tri = self.faces[fid]
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                if v in (a, b) and self.is_boundary_edge(_key(a, b)):
                    return True
        return False

    # -- local operations ----------------------------------------------
    def split(self, key):
        u, v = key
        fids = list(self.edge_faces.get(key, ()))
        if not fids:
            return None
        w = self._add_vertex(0.5 * (self.pos[u] + self.pos[v]))
        for fid in fids:
            tri = self.faces[fid]
            # directed occurrence p -> q of the edge inside this face
            for i in range(3):
                p, q = tri[i], tri[(i + 1) % 3]
                if _key(p, q) == key:
                    r = tri[(i + 2) % 3]
                    self._remove_face(fid)
                    self._add_face((p, w, r))
                    self._add_face((w, q, r))
                    break
        return w

    def collapse(self, key, max_len):
        u, v = key
        fids = self.edge_faces.get(key)
        if not fids:
            return False
        nu, nv = self.neighbors(u), self.neighbors(v)
        common = nu & nv
        opposite = set()
        for fid in fids:
            opposite.update(x for x in self.faces[fid] if x not in (u, v))
        if common != opposite:
            return False  # link condition: collapse would pinch the surface
        bu, bv = self.is_boundary_vertex(u), self.is_boundary_vertex(v)
        if bu and bv and not self.is_boundary_edge(key):
            return False
        if bu and not bv:
            target = self.pos[u]
        elif bv and not bu:
            target = self.pos[v]
        else:
            target = 0.5 * (self.pos[u] + self.pos[v])
        for n in (nu | nv) - {u, v}:
            if np.linalg.norm(target - self.pos[n]) > max_len:
                return False
        for fid in list(fids):
            self._remove_face(fid)
        for fid in list(self.vert_faces[v]):
            tri = self.faces[fid]
            self._remove_face(fid)
            self._add_face(tuple(u if x == v else x for x in tri))
        self.pos[u] = np.asarray(target)
        self.alive_v[v] = False
        return True

    def flip(self, key):
        fids = list(self.edge_faces.get(key, ()))
        if len(fids) != 2:
            return False
        u, v = key
        tri1, tri2 = self.faces[fids[0]], self.faces[fids[1]]
        a = next(x for x in tri1 if x not in (u, v))
        b = next(x for x in tri2 if x not in (u, v))
        if a == b or _key(a, b) in self.edge_faces:
            return False
        # order (u, v) so tri1 traverses the edge as u -> v
        if not any(tri1[i] == u and tri1[(i + 1) % 3] == v for i in range(3)):
            u, v = v, u
        before = self._valence_dev((u, v, a, b))
        deg_u, deg_v = self.valence(u), self.valence(v)
        if deg_u <= 3 or deg_v <= 3:
            return False
        after = self._valence_dev_after((u, v, a, b))
        if after >= before:
            return False
        self._remove_face(fids[0])
        self._remove_face(fids[1])
        self._add_face((a, u, b))
        self._add_face((b, v, a))
        return True

    def _target_valence(self, v):
        return 4 if self.is_boundary_vertex(v) else 6

    def _valence_dev(self, vs):
        return sum((self.valence(x) - self._target_valence(x)) ** 2 for x in vs)

    def _valence_dev_after(self, vs):
        u, v, a, b = vs
        deltas = {u: -1, v: -1, a: 1, b: 1}
        return sum((self.valence(x) + deltas[x] - self._target_valence(x)) ** 2
                   for x in vs)

    # -- export ---------------------------------------------------------
    def to_mesh(self) -> TriangleMesh:
        remap = {}
        verts = []
        for i, (p, alive) in enumerate(zip(self.pos, self.alive_v)):
            if alive and self.vert_faces[i]:
                remap[i] = len(verts)
                verts.append(p)
        faces = [tuple(remap[x] for x in tri) for tri in self.faces if tri is not None]
        return TriangleMesh(np.asarray(verts).reshape(-1, 3),
                            np.asarray(faces, dtype=np.int64).reshape(-1, 3))


def _key(a, b):
    return (a, b) if a < b else (b, a)


def remesh_isotropic(mesh: TriangleMesh, target_edge: float = 300.0,
                     iterations: int = 5, relax_rounds: int = 1) -> TriangleMesh:
    """Drive all edge lengths toward `target_edge` (micrometers)."""
    if not mesh.is_edge_manifold():
        bad = mesh.nonmanifold_edges()
        raise ValueError(
            f"remeshing requires an edge-manifold mesh; offending edges: "
            f"{bad[:10].tolist()}{'...' if len(bad) > 10 else ''}")
    if mesh.n_faces == 0:
        return mesh
    high = SPLIT_FACTOR * target_edge
    low = COLLAPSE_FACTOR * target_edge

    em = _EditMesh(mesh)
    for _ in range(iterations):
        # split long edges until none remain (new edges may still be long)
        for _ in range(10):
            long_edges = [k for k in list(em.edge_faces) if em.length(k) > high]
            if not long_edges:
                break
            for key in long_edges:
                if key in em.edge_faces and em.length(key) > high:
                    em.split(key)
        for key in sorted(em.edge_faces, key=em.length):
            if key in em.edge_faces and em.length(key) < low:
                em.collapse(key, max_len=high)
        for key in list(em.edge_faces):
            if key in em.edge_faces:
                em.flip(key)
        for _ in range(relax_rounds):
            _tangential_relax(em)
    return em.to_mesh()


def _tangential_relax(em: _EditMesh):
    """Move each interior vertex to its neighbor centroid, restricted to the
    tangent plane of its area-weighted normal."""
    snapshot = em.to_mesh()
    # to_mesh reindexes; rebuild the inverse map
    ids = [i for i, (alive) in enumerate(em.alive_v) if alive and em.vert_faces[i]]
    verts, faces = snapshot.vertices, snapshot.faces
    if not len(faces):
        return
    fn = np.cross(verts[faces[:, 1]] - verts[faces[:, 0]],
                  verts[faces[:, 2]] - verts[faces[:, 0]])
    vnorm = np.zeros_like(verts)
    for c in range(3):
        np.add.at(vnorm, faces[:, c], fn)
    lens = np.linalg.norm(vnorm, axis=1, keepdims=True)
    lens[lens == 0] = 1.0
    vnorm /= lens

    e = snapshot.edges()
    nbr_sum = np.zeros_like(verts)
    nbr_cnt = np.zeros(len(verts))
    np.add.at(nbr_sum, e[:, 0], verts[e[:, 1]])
    np.add.at(nbr_sum, e[:, 1], verts[e[:, 0]])
    np.add.at(nbr_cnt, e[:, 0], 1)
    np.add.at(nbr_cnt, e[:, 1], 1)
    uniq, counts = snapshot.edge_face_counts()
    boundary_v = np.zeros(len(verts), dtype=bool)
    boundary_v[uniq[counts == 1].ravel()] = True

    movable = (nbr_cnt > 0) & ~boundary_v
    q = np.where(movable[:, None], nbr_sum / np.maximum(nbr_cnt, 1)[:, None], verts)
    d = verts - q
    newpos = q + vnorm * np.sum(d * vnorm, axis=1, keepdims=True)
    newpos[~movable] = verts[~movable]
    for local, orig in enumerate(ids):
        em.pos[orig] = newpos[local]
