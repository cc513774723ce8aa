"""Per-triangle grid unwrap: layout, isometry, and chart separation.

Oracles:
- Each face gets its own padded cell on a ceil(sqrt(m)) grid, so the
  UV bounding boxes of any two faces are disjoint (checked pairwise on
  a small mesh).
- The planar embedding is rigid per face up to one uniform scale, so
  all three UV edge lengths divided by the matching 3D edge lengths
  agree within a face.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from ultraman.errors import MeshError
from ultraman.fixtures import unit_cube, uv_sphere
from ultraman.meshcore import Mesh, compute_normals
from ultraman.unwrap import CELL_PADDING, unwrap_triangle_grid


class TestStructure:
    def test_vertex_and_face_counts(self):
        mesh = uv_sphere(5, 6)
        out = unwrap_triangle_grid(mesh)
        m = mesh.num_faces
        assert out.num_faces == m
        assert out.num_vertices == 3 * m
        assert np.array_equal(
            out.faces, np.arange(3 * m, dtype=np.int32).reshape(-1, 3)
        )

    def test_positions_preserved_per_face(self):
        mesh = unit_cube()
        out = unwrap_triangle_grid(mesh)
        expected = mesh.vertices[mesh.faces.reshape(-1)]
        assert np.array_equal(out.vertices, expected)

    def test_uvs_inside_unit_square(self):
        out = unwrap_triangle_grid(uv_sphere(7, 8))
        assert out.uvs is not None
        assert out.uvs.min() >= 0.0 and out.uvs.max() <= 1.0

    def test_attributes_duplicated_per_corner(self):
        mesh = compute_normals(unit_cube())
        mesh.vertex_colors = np.linspace(0.0, 1.0, mesh.num_vertices * 3).reshape(
            -1, 3
        )
        out = unwrap_triangle_grid(mesh)
        flat = mesh.faces.reshape(-1)
        assert np.array_equal(out.normals, mesh.normals[flat])
        assert np.array_equal(out.vertex_colors, mesh.vertex_colors[flat])

    def test_empty_mesh_rejected(self):
        mesh = Mesh(
            vertices=np.zeros((3, 3)), faces=np.zeros((0, 3), dtype=np.int32)
        )
        with pytest.raises(MeshError, match="no faces"):
            unwrap_triangle_grid(mesh)


class TestChartGeometry:
    def test_charts_in_disjoint_cells(self):
        mesh = uv_sphere(3, 5)  # 20 faces -> 5x5 grid
        m = mesh.num_faces
        grid = math.ceil(math.sqrt(m))
        cell = 1.0 / grid
        out = unwrap_triangle_grid(mesh)
        tri_uv = out.uvs[out.faces]  # (m, 3, 2)
        lo = tri_uv.min(axis=1)
        hi = tri_uv.max(axis=1)
        for i in range(m):
            cx = (i % grid) * cell
            cy = (i // grid) * cell
            pad = cell * CELL_PADDING
            assert lo[i, 0] >= cx + pad - 1e-12
            assert lo[i, 1] >= cy + pad - 1e-12
            assert hi[i, 0] <= cx + cell - pad + 1e-12
            assert hi[i, 1] <= cy + cell - pad + 1e-12
        # Padding implies strictly separated bounding boxes.
        for i in range(m):
            for j in range(i + 1, m):
                x_gap = lo[j, 0] > hi[i, 0] or lo[i, 0] > hi[j, 0]
                y_gap = lo[j, 1] > hi[i, 1] or lo[i, 1] > hi[j, 1]
                assert x_gap or y_gap

    def test_per_face_uniform_scale(self):
        mesh = uv_sphere(6, 7)
        out = unwrap_triangle_grid(mesh)
        tri3d = out.vertices[out.faces]
        triuv = out.uvs[out.faces]
        for a, b in ((0, 1), (1, 2), (2, 0)):
            d3 = np.linalg.norm(tri3d[:, a] - tri3d[:, b], axis=1)
            duv = np.linalg.norm(triuv[:, a] - triuv[:, b], axis=1)
            ratio = duv / d3
            if a == 0 and b == 1:
                ref = ratio
            else:
                assert np.allclose(ratio, ref, rtol=1e-9)

    def test_largest_extent_fills_usable_cell(self):
        mesh = unit_cube()
        m = mesh.num_faces
        grid = math.ceil(math.sqrt(m))
        usable = (1.0 / grid) * (1.0 - 2.0 * CELL_PADDING)
        out = unwrap_triangle_grid(mesh)
        tri_uv = out.uvs[out.faces]
        span = (tri_uv.max(axis=1) - tri_uv.min(axis=1)).max(axis=1)
        assert np.allclose(span, usable, rtol=1e-9)

    def test_collinear_face_does_not_crash(self):
        mesh = Mesh(
            vertices=np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]]),
            faces=np.array([[0, 1, 2]], dtype=np.int32),
        )
        out = unwrap_triangle_grid(mesh)
        assert out.uvs.min() >= 0.0 and out.uvs.max() <= 1.0

    def test_output_revalidates(self):
        out = unwrap_triangle_grid(uv_sphere(4, 4))
        out.validate()
