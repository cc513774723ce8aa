"""Quadric edge-collapse decimation: accuracy and structural safety.

Oracles:
- A unit lat-long sphere (960 faces) decimated to 200 must stay a
  closed 2-manifold (every edge on exactly two faces, V - E + F = 2)
  and stay within 0.05 of the unit radius everywhere.
- A flat square patch must stay exactly flat and keep its bounding
  rectangle: all error planes and boundary penalty planes contain the
  optimal collapse points, so nothing can leave the plane or pull the
  rim inward.
"""

from __future__ import annotations

from collections import Counter

import numpy as np
import pytest

from ultraman.fixtures import gradient_colors, perturbed_sphere, uv_sphere
from ultraman.meshcore import Mesh, compute_normals
from ultraman.simplify import MIN_TARGET, simplify


def edge_face_counts(mesh: Mesh) -> Counter:
    counts: Counter = Counter()
    for f in mesh.faces:
        for k in range(3):
            e = (int(f[k]), int(f[(k + 1) % 3]))
            counts[(min(e), max(e))] += 1
    return counts


def assert_closed_manifold(mesh: Mesh) -> None:
    counts = edge_face_counts(mesh)
    assert set(counts.values()) == {2}
    v, e, f = mesh.num_vertices, len(counts), mesh.num_faces
    assert v - e + f == 2


def grid_patch(n: int = 11) -> Mesh:
    xs, ys = np.meshgrid(np.linspace(0.0, 1.0, n), np.linspace(0.0, 1.0, n))
    verts = np.stack([xs.ravel(), ys.ravel(), np.zeros(n * n)], axis=1)
    faces = []
    for i in range(n - 1):
        for j in range(n - 1):
            a = i * n + j
            b, c, d = a + 1, a + n, a + n + 1
            faces.append((a, b, d))
            faces.append((a, d, c))
    return Mesh(vertices=verts, faces=np.asarray(faces, dtype=np.int32))


class TestSphereDecimation:
    def test_reaches_target_and_stays_round(self):
        mesh = uv_sphere(21, 24)
        assert mesh.num_faces == 960
        out = simplify(mesh, 200)
        assert out.num_faces == 200
        radii = np.linalg.norm(out.vertices, axis=1)
        assert np.abs(radii - 1.0).max() < 0.05
        out.validate()

    def test_stays_closed_manifold(self):
        out = simplify(uv_sphere(21, 24), 200)
        assert_closed_manifold(out)

    def test_input_untouched(self):
        mesh = uv_sphere(9, 10)
        before = mesh.vertices.copy(), mesh.faces.copy()
        simplify(mesh, 40)
        assert np.array_equal(mesh.vertices, before[0])
        assert np.array_equal(mesh.faces, before[1])


class TestFlatPatch:
    def test_stays_flat_and_keeps_rim(self):
        out = simplify(grid_patch(11), 20)
        assert out.num_faces == 20
        assert np.abs(out.vertices[:, 2]).max() == 0.0
        assert np.allclose(out.vertices[:, :2].min(axis=0), [0.0, 0.0], atol=1e-9)
        assert np.allclose(out.vertices[:, :2].max(axis=0), [1.0, 1.0], atol=1e-9)


class TestNoOpAndClamp:
    def test_under_target_returns_independent_copy(self):
        mesh = uv_sphere(5, 6)
        out = simplify(mesh, mesh.num_faces)
        assert out.num_faces == mesh.num_faces
        assert np.array_equal(out.vertices, mesh.vertices)
        out.vertices[0] += 1.0
        assert not np.array_equal(out.vertices, mesh.vertices)

    def test_tiny_target_clamped_with_warning(self):
        out = simplify(uv_sphere(5, 6), 1)
        assert out.num_faces >= MIN_TARGET
        assert any("clamped" in w for w in out.warnings)


class TestAttributes:
    def test_colors_interpolate_within_range(self):
        mesh = gradient_colors(uv_sphere(15, 16))
        lo = mesh.vertex_colors.min(axis=0)
        hi = mesh.vertex_colors.max(axis=0)
        out = simplify(mesh, 100)
        assert out.vertex_colors is not None
        assert out.vertex_colors.shape == (out.num_vertices, 3)
        assert (out.vertex_colors >= lo - 1e-9).all()
        assert (out.vertex_colors <= hi + 1e-9).all()

    def test_normals_recomputed_radial(self):
        mesh = compute_normals(uv_sphere(15, 16))
        out = simplify(mesh, 100)
        assert out.normals is not None
        assert np.allclose(np.linalg.norm(out.normals, axis=1), 1.0, atol=1e-9)
        unit_pos = out.vertices / np.linalg.norm(out.vertices, axis=1, keepdims=True)
        assert ((out.normals * unit_pos).sum(axis=1) > 0.9).all()

    def test_uvs_stay_in_unit_square(self):
        mesh = uv_sphere(15, 16)
        rng = np.random.default_rng(0)
        mesh.uvs = rng.random((mesh.num_vertices, 2))
        out = simplify(mesh, 100)
        assert out.uvs is not None
        assert out.uvs.min() >= 0.0 and out.uvs.max() <= 1.0


class TestRandomizedInvariants:
    @pytest.mark.parametrize("seed", range(20))
    def test_perturbed_spheres(self, seed):
        mesh = perturbed_sphere(seed)
        target = 80
        out = simplify(mesh, target)
        out.validate()
        stalled = any("stalled" in w for w in out.warnings)
        assert out.num_faces <= target or stalled
        assert_closed_manifold(out)
        # Bumps are bounded, so the result must stay within the
        # perturbation envelope plus slack for collapse placement.
        radii = np.linalg.norm(out.vertices, axis=1)
        assert radii.max() < 1.4 and radii.min() > 0.5
