"""Fallback UV unwrap: every triangle gets its own uniform grid cell.

Meshes are expected to arrive with UVs from a real unwrapper; this one
exists so the pipeline is self-contained when they don't. Charts never
overlap and never touch, at the cost of seams on every edge.
"""

from __future__ import annotations

import math

import numpy as np

from ultraman.errors import MeshError
from ultraman.meshcore import Mesh

# Fraction of each grid cell kept clear around its triangle.
CELL_PADDING = 0.125


def unwrap_triangle_grid(mesh: Mesh) -> Mesh:
    """Assign per-triangle UV charts on a ceil(sqrt(m)) grid.

    Every face is split off with its own three vertices (positions,
    normals, colors duplicated), so the output has exactly 3·m
    vertices and the input's face count.
    """
    m = mesh.num_faces
    if m == 0:
        raise MeshError("mesh has no faces")
    grid = math.ceil(math.sqrt(m))
    cell = 1.0 / grid

    v = mesh.vertices[mesh.faces.reshape(-1)]  # (3m, 3)
    faces = np.arange(3 * m, dtype=np.int32).reshape(-1, 3)

    tri = mesh.vertices[mesh.faces]  # (m, 3, 3)
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    len1 = np.linalg.norm(e1, axis=1)
    safe1 = np.where(len1 < 1e-20, 1.0, len1)
    u_axis = e1 / safe1[:, None]
    proj = (e2 * u_axis).sum(axis=1)
    perp = e2 - proj[:, None] * u_axis
    len_perp = np.linalg.norm(perp, axis=1)

    # Local planar coordinates per corner: A at origin, B along +x.
    local = np.zeros((m, 3, 2), dtype=np.float64)
    local[:, 1, 0] = len1
    local[:, 2, 0] = proj
    local[:, 2, 1] = len_perp

    lo = local.min(axis=1)
    hi = local.max(axis=1)
    extent = np.maximum((hi - lo).max(axis=1), 1e-20)
    usable = cell * (1.0 - 2.0 * CELL_PADDING)
    scale = usable / extent

    idx = np.arange(m)
    cell_x = (idx % grid).astype(np.float64) * cell + cell * CELL_PADDING
    cell_y = (idx // grid).astype(np.float64) * cell + cell * CELL_PADDING

    uvs = (local - lo[:, None, :]) * scale[:, None, None]
    uvs[:, :, 0] += cell_x[:, None]
    uvs[:, :, 1] += cell_y[:, None]

    out = Mesh(
        vertices=v.astype(np.float64),
        faces=faces,
        uvs=np.clip(uvs.reshape(-1, 2), 0.0, 1.0),
        warnings=list(mesh.warnings),
    )
    if mesh.normals is not None:
        out.normals = mesh.normals[mesh.faces.reshape(-1)]
    if mesh.vertex_colors is not None:
        out.vertex_colors = mesh.vertex_colors[mesh.faces.reshape(-1)]
    out.validate()
    return out
