"""Texture atlas: texel addressing, baking, checkpoint round trips.

Oracle notes:
- Texel addressing is the only place the vertical flip between UV
  space (v up) and image rows (down) may live: uv (0, 1) is texel
  (0, 0), uv (0, 0) is texel (res-1, 0); centers invert exactly.
- Baking a triangle whose corners are pure red/green/blue gives the
  barycentric mix; at the uv-centroid texel all weights are ~1/3 so
  the color is (85, 85, 85) +- 1 (255 / 3 = 85).
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ultraman import atlas as atlas_mod
from ultraman.atlas import (
    SOURCE_NONE,
    STATUS_TEXTURED,
    STATUS_UNTEXTURED,
    TextureAtlas,
    bake_vertex_colors,
    load_atlas,
    new_atlas,
    save_atlas_meta,
    save_texture_png,
    texel_center_uv,
    uv_to_texel,
)
from ultraman.errors import UltramanError
from ultraman.meshcore import Mesh


class TestTexelAddressing:
    def test_corners(self):
        res = 64
        uv = np.array([[0.0, 1.0], [0.0, 0.0], [1.0, 1.0], [1.0, 0.0]])
        rows, cols = uv_to_texel(uv, res)
        assert list(rows) == [0, res - 1, 0, res - 1]
        assert list(cols) == [0, 0, res - 1, res - 1]

    def test_center_round_trip_is_identity(self):
        res = 32
        r = np.repeat(np.arange(res), res)
        c = np.tile(np.arange(res), res)
        uv = texel_center_uv(r, c, res)
        r2, c2 = uv_to_texel(uv, res)
        assert np.array_equal(r, r2)
        assert np.array_equal(c, c2)

    @settings(max_examples=50, deadline=None)
    @given(
        hnp.arrays(
            np.float64,
            st.tuples(st.integers(1, 20), st.just(2)),
            elements=st.floats(0.0, 1.0),
        ),
        st.integers(2, 257),
    )
    def test_all_uvs_land_in_range(self, uv, res):
        rows, cols = uv_to_texel(uv, res)
        assert rows.min() >= 0 and rows.max() < res
        assert cols.min() >= 0 and cols.max() < res

    def test_v_increase_moves_up(self):
        res = 16
        r_low, _ = uv_to_texel(np.array([[0.5, 0.2]]), res)
        r_high, _ = uv_to_texel(np.array([[0.5, 0.8]]), res)
        assert r_high[0] < r_low[0]


def one_triangle_mesh() -> Mesh:
    verts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    return Mesh(
        vertices=verts,
        faces=np.array([[0, 1, 2]], dtype=np.int32),
        uvs=np.array([[0.05, 0.05], [0.95, 0.05], [0.05, 0.95]]),
        vertex_colors=np.eye(3),  # red, green, blue corners
    )


class TestBake:
    def test_centroid_texel_is_equal_mix(self):
        res = 128
        atlas = bake_vertex_colors(one_triangle_mesh(), res)
        centroid_uv = np.array([[(0.05 + 0.95 + 0.05) / 3, (0.05 + 0.05 + 0.95) / 3]])
        row, col = uv_to_texel(centroid_uv, res)
        got = atlas.color[row[0], col[0], :3].astype(int)
        assert np.abs(got - 85).max() <= 1
        assert atlas.status[row[0], col[0]] == STATUS_TEXTURED

    def test_corner_texels_take_corner_colors(self):
        res = 128
        atlas = bake_vertex_colors(one_triangle_mesh(), res)
        row, col = uv_to_texel(np.array([[0.06, 0.06]]), res)
        got = atlas.color[row[0], col[0], :3].astype(int)
        assert got[0] > 220 and got[1] < 40 and got[2] < 40

    def test_uncovered_texels_stay_untextured(self):
        atlas = bake_vertex_colors(one_triangle_mesh(), 64)
        assert atlas.status[0, 63] == STATUS_UNTEXTURED
        assert atlas.color[0, 63, 3] == 0

    def test_covered_texels_are_opaque_with_no_source(self):
        atlas = bake_vertex_colors(one_triangle_mesh(), 64)
        covered = atlas.status == STATUS_TEXTURED
        assert (atlas.color[covered, 3] == 255).all()
        assert (atlas.source_view[covered] == SOURCE_NONE).all()
        assert (atlas.best_similarity[covered] == 0.0).all()

    def test_textured_count_matches_status(self):
        atlas = bake_vertex_colors(one_triangle_mesh(), 64)
        assert atlas.textured_count == int((atlas.status == 1).sum())
        assert 0 < atlas.textured_count < 64 * 64

    def test_requires_uvs_and_colors(self):
        bare = Mesh(
            vertices=one_triangle_mesh().vertices,
            faces=one_triangle_mesh().faces,
        )
        with pytest.raises(UltramanError):
            bake_vertex_colors(bare, 32)


def random_consistent_atlas(seed: int, res: int = 64) -> TextureAtlas:
    rng = np.random.default_rng(seed)
    atlas = new_atlas(res)
    textured = rng.random((res, res)) < 0.7
    atlas.status[textured] = STATUS_TEXTURED
    atlas.color[textured] = rng.integers(
        0, 256, (int(textured.sum()), 4), dtype=np.uint8
    )
    atlas.protected[textured & (rng.random((res, res)) < 0.4)] = True
    sim = rng.random((res, res)).astype(np.float32)
    sim[~textured] = 0.0
    atlas.best_similarity = sim
    views = rng.integers(0, 10, (res, res)).astype(np.int8)
    views[~textured] = SOURCE_NONE
    atlas.source_view = views
    atlas.validate()
    return atlas


class TestCheckpointRoundTrip:
    def test_full_state_survives(self, tmp_path):
        atlas = random_consistent_atlas(7)
        png = tmp_path / "c.png"
        meta = tmp_path / "c.json"
        save_texture_png(atlas, png)
        save_atlas_meta(atlas, meta)
        back = load_atlas(png, meta)
        assert np.array_equal(back.color, atlas.color)
        assert np.array_equal(back.status, atlas.status)
        assert np.array_equal(back.protected, atlas.protected)
        assert np.array_equal(back.source_view, atlas.source_view)
        # best_similarity is checkpointed quantized to 16 bits
        assert np.abs(back.best_similarity - atlas.best_similarity).max() <= 0.5 / 65535

    def test_resolution_mismatch_rejected(self, tmp_path):
        save_texture_png(new_atlas(64), tmp_path / "c.png")
        save_atlas_meta(new_atlas(32), tmp_path / "c.json")
        with pytest.raises(UltramanError, match="resolution"):
            load_atlas(tmp_path / "c.png", tmp_path / "c.json")


class TestRLECodec:
    @settings(max_examples=40, deadline=None)
    @given(
        hnp.arrays(
            np.uint8,
            st.tuples(st.integers(1, 12), st.integers(1, 12)),
            elements=st.integers(0, 4),
        )
    )
    def test_round_trip(self, values):
        stream = atlas_mod._rle_encode(values)
        back = atlas_mod._rle_decode(stream, np.uint8, values.shape)
        assert np.array_equal(back, values)

    def test_signed_values_round_trip(self):
        values = np.array([[-1, -1, 3], [3, 3, -1]], dtype=np.int8)
        stream = atlas_mod._rle_encode(values)
        assert stream == {"values": [-1, 3, -1], "counts": [2, 3, 1]}
        back = atlas_mod._rle_decode(stream, np.int8, values.shape)
        assert np.array_equal(back, values)

    def test_length_mismatch_rejected(self):
        with pytest.raises(UltramanError, match="length mismatch"):
            atlas_mod._rle_decode({"values": [1, 2], "counts": [4]}, np.uint8, (2, 2))

    def test_size_mismatch_rejected(self):
        with pytest.raises(UltramanError, match="size mismatch"):
            atlas_mod._rle_decode({"values": [1], "counts": [3]}, np.uint8, (2, 2))


class TestValidate:
    def test_rejects_untextured_with_similarity(self):
        atlas = new_atlas(8)
        atlas.best_similarity[2, 2] = 0.5
        with pytest.raises(UltramanError, match="similarity"):
            atlas.validate()

    def test_rejects_untextured_protected(self):
        atlas = new_atlas(8)
        atlas.protected[1, 1] = True
        with pytest.raises(UltramanError, match="protected"):
            atlas.validate()

    def test_accepts_consistent_state(self):
        random_consistent_atlas(3).validate()

    def test_copy_is_deep(self):
        atlas = random_consistent_atlas(5)
        dup = atlas.copy()
        dup.color[0, 0, 0] ^= 0xFF
        dup.status[0, 0] ^= 1
        assert not np.array_equal(dup.color, atlas.color)
        assert not np.array_equal(dup.status, atlas.status)
