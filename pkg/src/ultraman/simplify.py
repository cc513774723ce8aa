"""Quadric edge-collapse mesh simplification.

Classic error-quadric decimation: every vertex accumulates the squared
point-to-plane error of its incident faces (area-weighted), edges are
collapsed cheapest-first to the quadric-optimal point, and boundary
edges get stiff perpendicular penalty planes so open meshes keep their
rims. Collapses that would pinch the surface (link condition) or flip
a surviving face are rejected.
"""

from __future__ import annotations

import heapq

import numpy as np

from ultraman.errors import MeshError
from ultraman.meshcore import Mesh, compute_normals

# Faces thinner than this (squared-area scale) are dropped after collapse.
DEGENERATE_AREA = 1e-12

# Boundary penalty plane weight: BOUNDARY_WEIGHT * mean_edge_length^2.
BOUNDARY_WEIGHT = 1e3

# No closed triangle mesh has fewer faces than a tetrahedron.
MIN_TARGET = 4


def _face_quadrics(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Area-weighted fundamental quadric of each face, (m, 4, 4)."""
    a = vertices[faces[:, 0]]
    b = vertices[faces[:, 1]]
    c = vertices[faces[:, 2]]
    n = np.cross(b - a, c - a)
    double_area = np.linalg.norm(n, axis=1)
    safe = np.where(double_area < 1e-30, 1.0, double_area)
    unit = n / safe[:, None]
    d = -(unit * a).sum(axis=1)
    plane = np.concatenate([unit, d[:, None]], axis=1)  # (m, 4)
    quad = plane[:, :, None] * plane[:, None, :]  # (m, 4, 4)
    weight = 0.5 * double_area  # face area
    return quad * weight[:, None, None]


def _boundary_quadric(
    p0: np.ndarray, p1: np.ndarray, face_normal: np.ndarray, weight: float
) -> np.ndarray:
    """Penalty plane through a boundary edge, perpendicular to its face."""
    edge = p1 - p0
    n = np.cross(edge, face_normal)
    ln = np.linalg.norm(n)
    if ln < 1e-30:
        return np.zeros((4, 4))
    n = n / ln
    d = -float(n @ p0)
    plane = np.concatenate([n, [d]])
    return weight * np.outer(plane, plane)


def _optimal_point(
    quad: np.ndarray, p0: np.ndarray, p1: np.ndarray
) -> tuple[np.ndarray, float]:
    """Collapse target minimizing vᵀQv, with midpoint/endpoint fallback."""
    a = quad[:3, :3]
    b = -quad[:3, 3]
    try:
        x = np.linalg.solve(a, b)
        if np.isfinite(x).all():
            candidates = [x, (p0 + p1) / 2.0, p0, p1]
        else:
            candidates = [(p0 + p1) / 2.0, p0, p1]
    except np.linalg.LinAlgError:
        candidates = [(p0 + p1) / 2.0, p0, p1]
    best = None
    best_cost = np.inf
    for cand in candidates:
        h = np.concatenate([cand, [1.0]])
        cost = float(h @ quad @ h)
        if cost < best_cost:
            best_cost = cost
            best = cand
    return best, max(best_cost, 0.0)


class _Topology:
    """Mutable adjacency the collapse loop works against."""

    def __init__(self, vertices: np.ndarray, faces: np.ndarray):
        self.pos = vertices.copy()
        self.face_verts = [tuple(int(x) for x in f) for f in faces]
        self.face_alive = [True] * len(self.face_verts)
        self.vertex_faces: list[set[int]] = [set() for _ in range(len(vertices))]
        for fi, f in enumerate(self.face_verts):
            for vi in f:
                self.vertex_faces[vi].add(fi)
        self.alive_faces = len(self.face_verts)

    def neighbors(self, v: int) -> set[int]:
        out: set[int] = set()
        for fi in self.vertex_faces[v]:
            out.update(self.face_verts[fi])
        out.discard(v)
        return out

    def faces_with_edge(self, u: int, v: int) -> list[int]:
        return [
            fi
            for fi in self.vertex_faces[u]
            if v in self.face_verts[fi]
        ]


def _would_flip(topo: _Topology, moving: int, other: int, new_pos: np.ndarray) -> bool:
    """Does moving `moving` to new_pos invert any surviving face?"""
    for fi in topo.vertex_faces[moving]:
        f = topo.face_verts[fi]
        if other in f:
            continue  # face collapses away entirely
        pts = [topo.pos[v] if v != moving else None for v in f]
        old = [topo.pos[v] for v in f]
        n_old = np.cross(old[1] - old[0], old[2] - old[0])
        new = [new_pos if p is None else p for p in pts]
        n_new = np.cross(new[1] - new[0], new[2] - new[0])
        area_new = np.linalg.norm(n_new)
        if area_new * area_new < DEGENERATE_AREA:
            return True
        if float(n_old @ n_new) <= 0.0:
            return True
    return False


def simplify(mesh: Mesh, target_faces: int) -> Mesh:
    """Decimate to at most `target_faces` faces (best effort).

    Attributes (colors, UVs) are interpolated linearly along the
    collapsed edge at the parameter closest to the optimal point.
    Normals, when present on the input, are recomputed afterwards. A
    target below the tetrahedron minimum, or one unreachable without
    breaking the surface, produces a warning on the result instead of
    an error.
    """
    mesh.validate()
    warnings = list(mesh.warnings)
    target = int(target_faces)
    if target < MIN_TARGET:
        warnings.append(
            f"target_faces {target} below minimum {MIN_TARGET}; clamped"
        )
        target = MIN_TARGET

    if mesh.num_faces <= target:
        out = mesh.copy()
        out.warnings = warnings
        return out

    topo = _Topology(mesh.vertices, mesh.faces)
    n_verts = mesh.num_vertices

    quadrics = np.zeros((n_verts, 4, 4))
    fquad = _face_quadrics(mesh.vertices, mesh.faces)
    for fi, f in enumerate(mesh.faces):
        for vi in f:
            quadrics[vi] += fquad[fi]

    # Boundary penalty: edges with exactly one incident face.
    edge_faces: dict[tuple[int, int], list[int]] = {}
    for fi, f in enumerate(mesh.faces):
        for k in range(3):
            e = (int(f[k]), int(f[(k + 1) % 3]))
            e = (min(e), max(e))
            edge_faces.setdefault(e, []).append(fi)
    edge_arr = np.asarray(list(edge_faces.keys()), dtype=np.int64)
    edge_lengths = np.linalg.norm(
        mesh.vertices[edge_arr[:, 0]] - mesh.vertices[edge_arr[:, 1]], axis=1
    )
    mean_edge = float(edge_lengths.mean())
    penalty_weight = BOUNDARY_WEIGHT * mean_edge * mean_edge
    v_arr = mesh.vertices
    f_arr = mesh.faces
    for (u, v), fis in edge_faces.items():
        if len(fis) != 1:
            continue
        f = f_arr[fis[0]]
        fn = np.cross(v_arr[f[1]] - v_arr[f[0]], v_arr[f[2]] - v_arr[f[0]])
        ln = np.linalg.norm(fn)
        if ln < 1e-30:
            continue
        bq = _boundary_quadric(v_arr[u], v_arr[v], fn / ln, penalty_weight)
        quadrics[u] += bq
        quadrics[v] += bq

    # Attribute carriers, interpolated at each collapse.
    colors = None if mesh.vertex_colors is None else mesh.vertex_colors.copy()
    uvs = None if mesh.uvs is None else mesh.uvs.copy()

    version = np.zeros(n_verts, dtype=np.int64)
    heap: list[tuple[float, int, int, int, int]] = []

    def push_edge(u: int, v: int) -> None:
        if u > v:
            u, v = v, u
        quad = quadrics[u] + quadrics[v]
        _, cost = _optimal_point(quad, topo.pos[u], topo.pos[v])
        heapq.heappush(heap, (cost, u, v, int(version[u]), int(version[v])))

    for u, v in edge_faces:
        push_edge(u, v)

    vertex_alive = np.ones(n_verts, dtype=bool)

    while topo.alive_faces > target and heap:
        cost, u, v, ver_u, ver_v = heapq.heappop(heap)
        if not (vertex_alive[u] and vertex_alive[v]):
            continue
        if version[u] != ver_u or version[v] != ver_v:
            continue
        shared_faces = topo.faces_with_edge(u, v)
        if not shared_faces:
            continue
        # Link condition: the only common neighbors of u and v may be
        # the third corners of the shared faces, otherwise the collapse
        # pinches the surface into a non-manifold fan.
        common = topo.neighbors(u) & topo.neighbors(v)
        third = set()
        for fi in shared_faces:
            third.update(topo.face_verts[fi])
        third -= {u, v}
        if common != third:
            continue

        quad = quadrics[u] + quadrics[v]
        new_pos, _ = _optimal_point(quad, topo.pos[u], topo.pos[v])
        if _would_flip(topo, u, v, new_pos) or _would_flip(topo, v, u, new_pos):
            continue

        # Interpolate attributes at the projection of the new point
        # onto the old edge.
        p0, p1 = topo.pos[u], topo.pos[v]
        seg = p1 - p0
        denom = float(seg @ seg)
        t = 0.5 if denom < 1e-30 else float(np.clip((new_pos - p0) @ seg / denom, 0, 1))
        if colors is not None:
            colors[u] = (1.0 - t) * colors[u] + t * colors[v]
        if uvs is not None:
            uvs[u] = np.clip((1.0 - t) * uvs[u] + t * uvs[v], 0.0, 1.0)

        topo.pos[u] = new_pos
        quadrics[u] = quad
        vertex_alive[v] = False

        for fi in shared_faces:
            topo.face_alive[fi] = False
            topo.alive_faces -= 1
            for vi in topo.face_verts[fi]:
                topo.vertex_faces[vi].discard(fi)
        for fi in list(topo.vertex_faces[v]):
            f = topo.face_verts[fi]
            topo.face_verts[fi] = tuple(u if x == v else x for x in f)
            topo.vertex_faces[v].discard(fi)
            topo.vertex_faces[u].add(fi)
        # Drop faces the relocation degenerated (|cross| = 2 * area).
        for fi in list(topo.vertex_faces[u]):
            f = topo.face_verts[fi]
            pts = topo.pos[list(f)]
            n = np.cross(pts[1] - pts[0], pts[2] - pts[0])
            if float(n @ n) < 4.0 * DEGENERATE_AREA**2 or len(set(f)) < 3:
                topo.face_alive[fi] = False
                topo.alive_faces -= 1
                for vi in f:
                    topo.vertex_faces[vi].discard(fi)

        version[u] += 1
        for nb in topo.neighbors(u):
            push_edge(u, nb)

    if topo.alive_faces > target:
        warnings.append(
            f"simplification stalled at {topo.alive_faces} faces "
            f"(target {target}); no legal collapse remained"
        )

    # Compact the survivors, shedding any face that ended up zero-area.
    live_faces = []
    for fi, f in enumerate(topo.face_verts):
        if not topo.face_alive[fi]:
            continue
        pts = topo.pos[list(f)]
        n = np.cross(pts[1] - pts[0], pts[2] - pts[0])
        if float(n @ n) < 4.0 * DEGENERATE_AREA**2:
            continue
        live_faces.append(f)
    used = sorted({v for f in live_faces for v in f})
    remap = {old: new for new, old in enumerate(used)}
    new_faces = np.asarray(
        [[remap[a], remap[b], remap[c]] for a, b, c in live_faces],
        dtype=np.int32,
    )
    out = Mesh(
        vertices=topo.pos[used],
        faces=new_faces,
        warnings=warnings,
    )
    if colors is not None:
        out.vertex_colors = np.clip(colors[used], 0.0, 1.0)
    if uvs is not None:
        out.uvs = uvs[used]
    if mesh.normals is not None:
        out = compute_normals(out)
    out.validate()
    return out
