"""Texture atlas: RGBA texels plus the per-texel projection history.

UV convention matches OBJ: u grows right, v grows up, so texel row 0
holds v near 1. The two helpers below are the only place that mapping
lives; every module that touches texels goes through them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ultraman.errors import MeshError, UltramanError
from ultraman.meshcore import Mesh
from ultraman import raster

STATUS_UNTEXTURED = 0
STATUS_TEXTURED = 1

SOURCE_NONE = -1


def uv_to_texel(uv: np.ndarray, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """Continuous UV (n, 2) to integer texel (row, col), clamped."""
    uv = np.asarray(uv, dtype=np.float64)
    col = np.clip(np.floor(uv[:, 0] * resolution), 0, resolution - 1).astype(np.int64)
    row = np.clip(np.floor((1.0 - uv[:, 1]) * resolution), 0, resolution - 1).astype(
        np.int64
    )
    return row, col


def texel_center_uv(row: np.ndarray, col: np.ndarray, resolution: int) -> np.ndarray:
    """Texel (row, col) centers as UV coordinates (n, 2)."""
    u = (np.asarray(col, dtype=np.float64) + 0.5) / resolution
    v = 1.0 - (np.asarray(row, dtype=np.float64) + 0.5) / resolution
    return np.stack([u, v], axis=1)


@dataclass
class TextureAtlas:
    """Texel grid plus the state the progressive projection maintains.

    Attributes:
        color: (res, res, 4) uint8 RGBA; alpha 255 exactly on textured
            texels.
        status: (res, res) uint8, STATUS_UNTEXTURED or STATUS_TEXTURED.
        protected: (res, res) bool, set once by the front projection
            and never cleared.
        best_similarity: (res, res) float32, best observation score so
            far (0 while untextured).
        source_view: (res, res) int8, canonical view index that last
            wrote the texel, SOURCE_NONE otherwise.
    """

    color: np.ndarray
    status: np.ndarray
    protected: np.ndarray
    best_similarity: np.ndarray
    source_view: np.ndarray

    @property
    def resolution(self) -> int:
        return int(self.color.shape[0])

    def copy(self) -> "TextureAtlas":
        return TextureAtlas(
            self.color.copy(),
            self.status.copy(),
            self.protected.copy(),
            self.best_similarity.copy(),
            self.source_view.copy(),
        )

    def validate(self) -> None:
        res = self.resolution
        if self.color.shape != (res, res, 4) or self.color.dtype != np.uint8:
            raise UltramanError("atlas color must be (res, res, 4) uint8")
        for name, arr, dt in (
            ("status", self.status, np.uint8),
            ("protected", self.protected, np.bool_),
            ("best_similarity", self.best_similarity, np.float32),
            ("source_view", self.source_view, np.int8),
        ):
            if arr.shape != (res, res) or arr.dtype != dt:
                raise UltramanError(f"atlas {name} must be (res, res) {dt}")
        untextured = self.status == STATUS_UNTEXTURED
        if (self.best_similarity[untextured] != 0.0).any():
            raise UltramanError("untextured texel with nonzero best_similarity")
        if self.protected[untextured].any():
            raise UltramanError("untextured texel marked protected")

    @property
    def textured_count(self) -> int:
        return int((self.status == STATUS_TEXTURED).sum())


def new_atlas(resolution: int) -> TextureAtlas:
    if resolution <= 0:
        raise UltramanError("atlas resolution must be positive")
    return TextureAtlas(
        color=np.zeros((resolution, resolution, 4), dtype=np.uint8),
        status=np.zeros((resolution, resolution), dtype=np.uint8),
        protected=np.zeros((resolution, resolution), dtype=bool),
        best_similarity=np.zeros((resolution, resolution), dtype=np.float32),
        source_view=np.full((resolution, resolution), SOURCE_NONE, dtype=np.int8),
    )


def rasterize_uv(mesh: Mesh, resolution: int) -> raster.RasterResult:
    """Rasterize the mesh's UV layout onto the texel grid.

    Pixel (r, c) of the result is texel (r, c); barycentrics are affine
    (UV space is flat). Overlapping charts resolve to the lowest face
    index, deterministically.
    """
    if mesh.uvs is None:
        raise MeshError("mesh not unwrapped")
    uv = mesh.uvs[mesh.faces]  # (m, 3, 2)
    xy = np.empty_like(uv)
    xy[:, :, 0] = uv[:, :, 0] * resolution
    xy[:, :, 1] = (1.0 - uv[:, :, 1]) * resolution
    return raster.rasterize_triangles(xy, None, resolution, resolution)


def bake_vertex_colors(mesh: Mesh, atlas_resolution: int) -> TextureAtlas:
    """Bake per-vertex colors into a fresh atlas.

    Every texel covered by a UV triangle gets the barycentric
    interpolation of its corner colors; covered texels become textured
    with similarity 0 and no source view, so later views are free to
    improve on them.
    """
    if mesh.uvs is None:
        raise MeshError("mesh not unwrapped")
    if mesh.vertex_colors is None:
        raise MeshError("mesh has no vertex colors to bake")
    atlas = new_atlas(atlas_resolution)
    result = rasterize_uv(mesh, atlas_resolution)
    covered = result.covered()
    if not covered.any():
        return atlas
    rgb = raster.interpolate(result, mesh.faces, mesh.vertex_colors)
    atlas.color[covered, :3] = np.clip(
        np.rint(rgb[covered] * 255.0), 0, 255
    ).astype(np.uint8)
    atlas.color[covered, 3] = 255
    atlas.status[covered] = STATUS_TEXTURED
    return atlas


# --------------------------------------------------------------------------
# Checkpoints: color goes to PNG, everything else to a run-length
# encoded JSON sidecar.


def _rle_encode(values: np.ndarray) -> dict:
    flat = np.asarray(values).ravel()
    if flat.size == 0:
        return {"values": [], "counts": []}
    breaks = np.flatnonzero(flat[1:] != flat[:-1])
    starts = np.concatenate([[0], breaks + 1])
    ends = np.concatenate([breaks + 1, [flat.size]])
    run_values = flat[starts]
    counts = ends - starts
    return {
        "values": [int(v) for v in run_values],
        "counts": [int(c) for c in counts],
    }


def _rle_decode(stream: dict, dtype, shape: tuple[int, int]) -> np.ndarray:
    values = np.asarray(stream["values"])
    counts = np.asarray(stream["counts"], dtype=np.int64)
    if values.size != counts.size:
        raise UltramanError("corrupt checkpoint: RLE stream length mismatch")
    total = int(counts.sum()) if counts.size else 0
    if total != shape[0] * shape[1]:
        raise UltramanError("corrupt checkpoint: RLE stream size mismatch")
    return np.repeat(values, counts).astype(dtype).reshape(shape)


# best_similarity is checkpointed quantized to 16 bits; the update
# margin (default 0.1) dwarfs the 1/65535 step, so resumed
# classification decisions are unaffected.
_SIM_SCALE = 65535.0


def save_atlas_meta(atlas: TextureAtlas, path: str | Path) -> None:
    atlas.validate()
    sim_q = np.rint(
        np.clip(atlas.best_similarity.astype(np.float64), 0.0, 1.0) * _SIM_SCALE
    ).astype(np.uint16)
    payload = {
        "resolution": atlas.resolution,
        "textured_count": atlas.textured_count,
        "status": _rle_encode(atlas.status),
        "protected": _rle_encode(atlas.protected.astype(np.uint8)),
        "best_similarity_q16": _rle_encode(sim_q),
        "source_view": _rle_encode(atlas.source_view),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, separators=(",", ":"))
        fh.write("\n")


def load_atlas(color_png: str | Path, meta_json: str | Path) -> TextureAtlas:
    """Rebuild an atlas from its checkpoint pair."""
    from ultraman.images import load_image

    color = load_image(color_png).pixels
    with open(meta_json) as fh:
        payload = json.load(fh)
    res = int(payload["resolution"])
    if color.shape != (res, res, 4):
        raise UltramanError(
            f"checkpoint color {color.shape[:2]} does not match meta resolution {res}"
        )
    shape = (res, res)
    sim_q = _rle_decode(payload["best_similarity_q16"], np.uint16, shape)
    atlas = TextureAtlas(
        color=color,
        status=_rle_decode(payload["status"], np.uint8, shape),
        protected=_rle_decode(payload["protected"], np.uint8, shape).astype(bool),
        best_similarity=(sim_q.astype(np.float64) / _SIM_SCALE).astype(np.float32),
        source_view=_rle_decode(payload["source_view"], np.int8, shape),
    )
    atlas.validate()
    return atlas


def save_texture_png(atlas: TextureAtlas, path: str | Path) -> None:
    from ultraman.images import InputImage, save_image

    save_image(InputImage(atlas.color.copy()), path)
