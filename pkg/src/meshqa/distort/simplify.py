"""Quadric error metric decimation by half-edge collapse.

Each collapse moves one endpoint ``a`` onto the other endpoint ``b`` and
deletes the (one or two) triangles sharing the edge. Vertex placement is
restricted to the surviving endpoint, which keeps the per-corner texture
coordinates well defined: every uv "wedge" of ``a`` must be carried onto a
wedge of ``b`` through a triangle adjacent to the collapsed edge, otherwise
the collapse would tear or smear a UV seam and is rejected.

Candidates are kept in a binary heap keyed on ``(quadric error, edge index,
direction)``, so ties resolve on the smallest edge index.
"""

from __future__ import annotations

import heapq
import logging

import numpy as np

from meshqa.mesh_io import MeshFrame

log = logging.getLogger(__name__)

# weight of the constraint planes placed along seams and open boundaries
SEAM_WEIGHT = 10.0
# a collapse may not turn any surviving triangle by more than ~84 degrees
MIN_NORMAL_COS = 0.1


def _plane_quadrics(p, faces):
    """Area-weighted fundamental quadrics, packed as the 10 upper entries."""
    v0, v1, v2 = p[faces[:, 0]], p[faces[:, 1]], p[faces[:, 2]]
    n = np.cross(v1 - v0, v2 - v0)
    area2 = np.linalg.norm(n, axis=1)
    ok = area2 > 0
    n[ok] /= area2[ok, None]
    n[~ok] = 0.0
    d = -np.einsum("ij,ij->i", n, v0)
    w = 0.5 * area2
    return _pack(n, d, w)


def _pack(n, d, w):
    a, b, c = n[:, 0], n[:, 1], n[:, 2]
    return np.stack(
        [a * a, a * b, a * c, a * d, b * b, b * c, b * d, c * c, c * d, d * d], axis=1
    ) * w[:, None]


def _error(q, x, y, z):
    return (
        q[0] * x * x + 2 * q[1] * x * y + 2 * q[2] * x * z + 2 * q[3] * x
        + q[4] * y * y + 2 * q[5] * y * z + 2 * q[6] * y
        + q[7] * z * z + 2 * q[8] * z + q[9]
    )


def _normal(pa, pb, pc):
    ux, uy, uz = pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2]
    vx, vy, vz = pc[0] - pa[0], pc[1] - pa[1], pc[2] - pa[2]
    return (uy * vz - uz * vy, uz * vx - ux * vz, ux * vy - uy * vx)


class _Decimator:
    def __init__(self, frame: MeshFrame):
        self.pos = frame.positions.tolist()
        self.faces = frame.faces.tolist()
        self.has_uv = frame.face_uvs is not None
        if self.has_uv:
            # weld texture coordinates by value so wedges are identified by uv
            uniq, inverse = np.unique(frame.uvs, axis=0, return_inverse=True)
            self.uvs = uniq
            self.fuv = inverse.reshape(-1)[frame.face_uvs].tolist()
        else:
            self.uvs = frame.uvs
            self.fuv = None
        self.alive = [True] * len(self.faces)
        self.n_alive = len(self.faces)
        self.vf = [set() for _ in self.pos]
        for f, tri in enumerate(self.faces):
            for v in tri:
                self.vf[v].add(f)
        self.version = [0] * len(self.pos)
        self.edge_ids = {}
        self._init_quadrics(frame)

    def _init_quadrics(self, frame):
        p = frame.positions
        faces = frame.faces
        fq = _plane_quadrics(p, faces)
        vq = np.zeros((len(p), 10))
        for k in range(3):
            np.add.at(vq, faces[:, k], fq)

        # constraint planes along open boundaries and uv seams
        edge_faces = {}
        for f, tri in enumerate(self.faces):
            for k in range(3):
                a, b = tri[k], tri[(k + 1) % 3]
                edge_faces.setdefault((min(a, b), max(a, b)), []).append(f)
        ea, eb, ef = [], [], []
        for (a, b), fs in edge_faces.items():
            if len(fs) == 1 or (len(fs) == 2 and self._is_seam(a, b, fs)):
                ea.append(a)
                eb.append(b)
                ef.append(fs[0])
        if ea:
            ea, eb, ef = np.array(ea), np.array(eb), np.array(ef)
            tri = faces[ef]
            fn = np.cross(p[tri[:, 1]] - p[tri[:, 0]], p[tri[:, 2]] - p[tri[:, 0]])
            e = p[eb] - p[ea]
            n = np.cross(e, fn)
            norm = np.linalg.norm(n, axis=1)
            ok = norm > 0
            n[ok] /= norm[ok, None]
            n[~ok] = 0.0
            d = -np.einsum("ij,ij->i", n, p[ea])
            w = SEAM_WEIGHT * np.einsum("ij,ij->i", e, e)
            cq = _pack(n, d, w)
            np.add.at(vq, ea, cq)
            np.add.at(vq, eb, cq)
        self.q = vq.tolist()

    def _is_seam(self, a, b, fs):
        if not self.has_uv:
            return False
        uv_pairs = set()
        for f in fs:
            tri, tuv = self.faces[f], self.fuv[f]
            uv_pairs.add((tuv[tri.index(a)], tuv[tri.index(b)]))
        return len(uv_pairs) > 1

    def neighbors(self, v):
        out = set()
        for f in self.vf[v]:
            out.update(self.faces[f])
        out.discard(v)
        return out

    def edge_id(self, a, b):
        key = (a, b) if a < b else (b, a)
        eid = self.edge_ids.get(key)
        if eid is None:
            eid = self.edge_ids[key] = len(self.edge_ids)
        return eid

    def push_edge(self, heap, a, b):
        qa, qb = self.q[a], self.q[b]
        q = [x + y for x, y in zip(qa, qb)]
        eid = self.edge_id(a, b)
        ver = (self.version[a], self.version[b])
        # direction 0 removes a (keeps b), direction 1 removes b
        heapq.heappush(heap, (_error(q, *self.pos[b]), eid, 0, a, b, ver))
        heapq.heappush(heap, (_error(q, *self.pos[a]), eid, 1, b, a, (ver[1], ver[0])))

    def is_boundary_vertex(self, v):
        counts = {}
        for f in self.vf[v]:
            for u in self.faces[f]:
                if u != v:
                    counts[u] = counts.get(u, 0) + 1
        return any(c == 1 for c in counts.values())

    def try_collapse(self, a, b):
        """Collapse ``a`` onto ``b`` if topology, orientation and uvs allow."""
        shared = self.vf[a] & self.vf[b]
        if not shared or len(shared) > 2:
            return False
        # link condition: common neighbours are exactly the opposite corners
        opposite = set()
        for f in shared:
            opposite.update(self.faces[f])
        opposite -= {a, b}
        if self.neighbors(a) & self.neighbors(b) != opposite:
            return False
        if len(shared) == 2 and self.is_boundary_vertex(a):
            return False  # would pull an open boundary inwards
        if len(shared) == 1 and len(self.vf[a]) == 1 and len(self.vf[b]) == 1:
            return False  # isolated triangle

        uv_map = {}
        if self.has_uv:
            for f in shared:
                tri, tuv = self.faces[f], self.fuv[f]
                ta, tb = tuv[tri.index(a)], tuv[tri.index(b)]
                if uv_map.setdefault(ta, tb) != tb:
                    return False
            for f in self.vf[a]:
                if self.fuv[f][self.faces[f].index(a)] not in uv_map:
                    return False  # a wedge of a has no counterpart on b

        pb = self.pos[b]
        for f in self.vf[a] - shared:
            tri = self.faces[f]
            pts = [self.pos[v] for v in tri]
            old = _normal(*pts)
            pts[tri.index(a)] = pb
            new = _normal(*pts)
            no = (old[0] ** 2 + old[1] ** 2 + old[2] ** 2) ** 0.5
            nn = (new[0] ** 2 + new[1] ** 2 + new[2] ** 2) ** 0.5
            if nn <= 1e-12 * max(no, 1e-300):
                return False
            if no > 0 and (old[0] * new[0] + old[1] * new[1] + old[2] * new[2]) < MIN_NORMAL_COS * no * nn:
                return False

        for f in shared:
            self.alive[f] = False
            self.n_alive -= 1
            for v in self.faces[f]:
                self.vf[v].discard(f)
        for f in list(self.vf[a]):
            tri = self.faces[f]
            k = tri.index(a)
            tri[k] = b
            if self.has_uv:
                self.fuv[f][k] = uv_map[self.fuv[f][k]]
            self.vf[b].add(f)
        self.vf[a] = set()
        self.q[b] = [x + y for x, y in zip(self.q[a], self.q[b])]
        self.version[a] += 1
        self.version[b] += 1
        return True

    def run(self, target):
        while self.n_alive > target:
            heap = []
            for key in sorted(
                {tuple(sorted((t[k], t[(k + 1) % 3]))) for f, t in enumerate(self.faces) if self.alive[f] for k in range(3)}
            ):
                self.push_edge(heap, *key)
            collapsed = 0
            while heap and self.n_alive > target:
                _, _, _, a, b, ver = heapq.heappop(heap)
                if ver != (self.version[a], self.version[b]) or not self.vf[a] or not self.vf[b]:
                    continue
                if not self.try_collapse(a, b):
                    continue
                collapsed += 1
                for x in self.neighbors(b):
                    self.push_edge(heap, b, x)
            if not collapsed:
                log.warning("simplify: stuck at %d faces (target %d)", self.n_alive, target)
                break

    def result(self, texture_id):
        keep = [f for f, ok in enumerate(self.alive) if ok]
        faces = np.array([self.faces[f] for f in keep], dtype=np.int64).reshape(-1, 3)
        used, faces = np.unique(faces, return_inverse=True)
        pos = np.asarray(self.pos)[used]
        faces = faces.reshape(-1, 3)
        if self.has_uv:
            fuv = np.array([self.fuv[f] for f in keep], dtype=np.int64).reshape(-1, 3)
            used_uv, fuv = np.unique(fuv, return_inverse=True)
            return MeshFrame(pos, faces, self.uvs[used_uv], fuv.reshape(-1, 3), texture_id)
        return MeshFrame(pos, faces, np.zeros((0, 2)), None, texture_id)


def simplify_frame(frame: MeshFrame, face_target: int) -> MeshFrame:
    """Decimate one frame to at most ``face_target`` triangles."""
    if face_target < 4:
        raise ValueError("face target must be >= 4")
    if face_target >= frame.n_faces:
        if face_target > frame.n_faces:
            log.info("simplify: target %d exceeds %d faces, frame unchanged", face_target, frame.n_faces)
        return frame.copy()
    dec = _Decimator(frame)
    dec.run(face_target)
    return dec.result(frame.texture_id)


def simplify(seq, face_target: int):
    """Decimate every frame of ``seq`` independently."""
    if not seq.frames:
        raise ValueError("empty sequence")
    return seq.replace(frames=[simplify_frame(f, face_target) for f in seq.frames])
