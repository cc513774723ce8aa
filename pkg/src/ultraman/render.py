"""Per-view rendering: depth, similarity, color, and texel visibility.

Both triangle orientations are rasterized (no back-face culling) and
the nearest fragment wins, so depth silhouettes match what a watertight
scan would produce even when source meshes have inconsistent winding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ultraman import raster
from ultraman.atlas import TextureAtlas, rasterize_uv, texel_center_uv, uv_to_texel
from ultraman.errors import MeshError, UltramanError
from ultraman.meshcore import Mesh
from ultraman.views import CameraMats

# Fragments closer than this along the camera axis are clipped.
NEAR_EPS = 1e-9

# Visibility tolerance as a fraction of the observed scene depth range.
DEPTH_EPS_FRACTION = 1e-3

MAGENTA = np.array([255, 0, 255, 255], dtype=np.uint8)

# Untextured texels within this many texels of a textured one sample it
# instead (gutter fill), hiding chart-padding bleed at nearest sampling.
GUTTER_TEXELS = 4.0


@dataclass
class DepthMap:
    """Z-buffer output of one view.

    Attributes:
        values: (h, w) float64 camera-space depth; +inf on background.
        foreground: (h, w) bool coverage.
        near, far: observed foreground depth range (0, 0 when empty).
    """

    values: np.ndarray
    foreground: np.ndarray
    near: float
    far: float

    def depth_eps(self) -> float:
        """Visibility tolerance for this view's depth range."""
        span = self.far - self.near
        return max(DEPTH_EPS_FRACTION * span, 1e-9)


@dataclass
class SimilarityMap:
    """Clamped cosine between surface normal and view direction."""

    values: np.ndarray  # (h, w) float64 in [0, 1], 0 on background
    foreground: np.ndarray


@dataclass
class ColorRender:
    """Atlas-textured render plus where the atlas had nothing to give."""

    pixels: np.ndarray  # (h, w, 4) uint8
    foreground: np.ndarray  # (h, w) bool
    uncovered: np.ndarray  # (h, w) bool, foreground pixels w/o texture


@dataclass
class TexelVisMap:
    """Atlas texels observable in one view, in texel scan order.

    Parallel arrays; entry k says texel (tex_row[k], tex_col[k])
    projects to view pixel (pix_row[k], pix_col[k]) with the given
    facing similarity and camera depth.
    """

    tex_row: np.ndarray
    tex_col: np.ndarray
    pix_row: np.ndarray
    pix_col: np.ndarray
    similarity: np.ndarray
    depth: np.ndarray
    image_size: tuple[int, int]
    atlas_resolution: int

    def __len__(self) -> int:
        return int(self.tex_row.shape[0])


@dataclass
class ViewRaster:
    """One view's rasterization, shared by the per-view products."""

    result: raster.RasterResult
    cams: CameraMats


def _screen_triangles(mesh: Mesh, cams: CameraMats):
    xy_all, z_all = cams.project(mesh.vertices)
    tri_xy = xy_all[mesh.faces]
    tri_z = z_all[mesh.faces]
    # Faces with any vertex at or behind the camera are dropped rather
    # than clipped; the orbit cameras never come close to the mesh.
    keep = (tri_z > NEAR_EPS).all(axis=1)
    return tri_xy, tri_z, keep


def rasterize_view(mesh: Mesh, cams: CameraMats) -> ViewRaster:
    """Z-buffer the mesh once for a view; reused by all render products."""
    width, height = cams.image_size
    tri_xy, tri_z, keep = _screen_triangles(mesh, cams)
    if not keep.all():
        idx = np.flatnonzero(keep)
        res = raster.rasterize_triangles(
            tri_xy[idx], tri_z[idx], height, width
        )
        # Map compacted face ids back to original ones.
        face = res.face.copy()
        hit = face >= 0
        face[hit] = idx[face[hit]].astype(np.int32)
        res.face = face
    else:
        res = raster.rasterize_triangles(tri_xy, tri_z, height, width)
    return ViewRaster(result=res, cams=cams)


def render_depth(
    mesh: Mesh, cams: CameraMats, view: ViewRaster | None = None
) -> DepthMap:
    """Perspective-correct depth of the nearest surface per pixel."""
    if view is None:
        view = rasterize_view(mesh, cams)
    depth = view.result.depth
    fg = view.result.covered()
    if fg.any():
        near = float(depth[fg].min())
        far = float(depth[fg].max())
    else:
        near = far = 0.0
    return DepthMap(values=depth, foreground=fg, near=near, far=far)


def export_conditioning_depth(depth: DepthMap) -> np.ndarray:
    """8-bit conditioning image: near surfaces bright, background 0.

    The farthest foreground pixel maps to 0 and is indistinguishable
    from background in the image alone; the DepthMap keeps the real
    foreground flag.
    """
    out = np.zeros(depth.values.shape, dtype=np.uint8)
    fg = depth.foreground
    if not fg.any():
        return out
    span = depth.far - depth.near
    if span <= 0.0:
        out[fg] = 255
        return out
    scaled = 255.0 * (depth.far - depth.values[fg]) / span
    out[fg] = np.floor(scaled + 0.5).astype(np.uint8)  # round half up
    return out


def export_depth16(depth: DepthMap) -> np.ndarray:
    """16-bit debug depth dump, same orientation as the 8-bit export."""
    out = np.zeros(depth.values.shape, dtype=np.uint16)
    fg = depth.foreground
    if not fg.any():
        return out
    span = depth.far - depth.near
    if span <= 0.0:
        out[fg] = 65535
        return out
    scaled = 65535.0 * (depth.far - depth.values[fg]) / span
    out[fg] = np.floor(scaled + 0.5).astype(np.uint16)
    return out


def render_similarity(
    mesh: Mesh, cams: CameraMats, view: ViewRaster | None = None
) -> SimilarityMap:
    """Per-pixel clamped cosine of (surface normal, direction to camera)."""
    if mesh.normals is None:
        raise MeshError("mesh has no normals; run compute_normals first")
    if view is None:
        view = rasterize_view(mesh, cams)
    res = view.result
    fg = res.covered()
    values = np.zeros(res.face.shape, dtype=np.float64)
    if fg.any():
        pos = raster.interpolate(res, mesh.faces, mesh.vertices)
        nrm = raster.interpolate(res, mesh.faces, mesh.normals)
        rows, cols = np.nonzero(fg)
        p = pos[rows, cols]
        n = nrm[rows, cols]
        nlen = np.linalg.norm(n, axis=1)
        nlen[nlen < 1e-20] = 1.0
        n = n / nlen[:, None]
        to_cam = cams.position[None, :] - p
        dlen = np.linalg.norm(to_cam, axis=1)
        dlen[dlen < 1e-20] = 1.0
        to_cam = to_cam / dlen[:, None]
        values[rows, cols] = np.clip((n * to_cam).sum(axis=1), 0.0, 1.0)
    return SimilarityMap(values=values, foreground=fg)


def render_color(
    mesh: Mesh,
    atlas: TextureAtlas,
    cams: CameraMats,
    view: ViewRaster | None = None,
) -> ColorRender:
    """Render the current atlas state: nearest-texel sampling.

    Samples that land on an untextured texel fall back to the nearest
    textured texel within GUTTER_TEXELS (gutter fill, hides the padding
    between UV charts). Beyond that they come out magenta and are
    flagged in `uncovered`, so callers can tell debug color from real
    color.
    """
    if mesh.uvs is None:
        raise MeshError("mesh not unwrapped")
    if view is None:
        view = rasterize_view(mesh, cams)
    res = view.result
    fg = res.covered()
    h, w = res.face.shape
    pixels = np.zeros((h, w, 4), dtype=np.uint8)
    uncovered = np.zeros((h, w), dtype=bool)
    if fg.any():
        uv = raster.interpolate(res, mesh.faces, mesh.uvs)
        rows, cols = np.nonzero(fg)
        trow, tcol = uv_to_texel(uv[rows, cols], atlas.resolution)
        texel_ok = atlas.status[trow, tcol] == 1
        if not texel_ok.all():
            dist, (nr, nc) = ndimage.distance_transform_edt(
                atlas.status != 1, return_indices=True
            )
            miss = ~texel_ok
            mr, mc = trow[miss], tcol[miss]
            fillable = dist[mr, mc] <= GUTTER_TEXELS
            trow[miss] = np.where(fillable, nr[mr, mc], trow[miss])
            tcol[miss] = np.where(fillable, nc[mr, mc], tcol[miss])
            texel_ok = atlas.status[trow, tcol] == 1
        colors = atlas.color[trow, tcol]
        colors[~texel_ok] = MAGENTA
        pixels[rows, cols] = colors
        uncovered[rows, cols] = ~texel_ok
    return ColorRender(pixels=pixels, foreground=fg, uncovered=uncovered)


@dataclass
class TexelGeometry:
    """Surface samples at texel centers, from UV-space rasterization.

    Computed once per mesh+resolution and reused across all views.
    """

    tex_row: np.ndarray  # (n,) covered texel rows, scan order
    tex_col: np.ndarray
    position: np.ndarray  # (n, 3) world-space surface points
    normal: np.ndarray  # (n, 3) unit normals
    face: np.ndarray  # (n,) source face per texel
    covered: np.ndarray  # (res, res) bool atlas coverage


def atlas_surface_geometry(mesh: Mesh, atlas_resolution: int) -> TexelGeometry:
    """Reconstruct the 3D point and normal under every covered texel."""
    if mesh.normals is None:
        raise MeshError("mesh has no normals; run compute_normals first")
    res = rasterize_uv(mesh, atlas_resolution)
    covered = res.covered()
    rows, cols = np.nonzero(covered)
    pos = raster.interpolate(res, mesh.faces, mesh.vertices)
    nrm = raster.interpolate(res, mesh.faces, mesh.normals)
    n = nrm[rows, cols]
    nlen = np.linalg.norm(n, axis=1)
    nlen[nlen < 1e-20] = 1.0
    return TexelGeometry(
        tex_row=rows.astype(np.int32),
        tex_col=cols.astype(np.int32),
        position=pos[rows, cols],
        normal=n / nlen[:, None],
        face=res.face[rows, cols].astype(np.int32),
        covered=covered,
    )


def _winner_plane_depth(
    view: ViewRaster,
    mesh: Mesh,
    cams: CameraMats,
    xy: np.ndarray,
    rows: np.ndarray,
    cols: np.ndarray,
) -> np.ndarray:
    """Depth of each pixel's z-buffer winner at exact positions `xy`.

    The z-buffer stores depth at the pixel center; comparing a point
    sampled elsewhere in the pixel against that value picks up the
    surface's slope across the pixel. Evaluating the winning face's
    plane at the point's own (x, y) instead makes the comparison
    slope-free. Background pixels come back +inf; degenerate winner
    triangles fall back to the stored pixel-center depth.
    """
    winner = view.result.face[rows, cols]
    out = np.full(xy.shape[0], np.inf)
    hit = winner >= 0
    if not hit.any():
        return out
    tri_xy, tri_z, _ = _screen_triangles(mesh, cams)
    tri = tri_xy[winner[hit]]  # (k, 3, 2)
    pz = tri_z[winner[hit]]  # (k, 3)
    p = xy[hit]
    # Signed-area barycentrics of p in the winner triangle's plane.
    v0 = tri[:, 1] - tri[:, 0]
    v1 = tri[:, 2] - tri[:, 0]
    d = p - tri[:, 0]
    den = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
    good = np.abs(den) > raster.MIN_DOUBLE_AREA
    den_safe = np.where(good, den, 1.0)
    l1 = (d[:, 0] * v1[:, 1] - d[:, 1] * v1[:, 0]) / den_safe
    l2 = (v0[:, 0] * d[:, 1] - v0[:, 1] * d[:, 0]) / den_safe
    l0 = 1.0 - l1 - l2
    zinv = l0 / pz[:, 0] + l1 / pz[:, 1] + l2 / pz[:, 2]
    plane = np.where((zinv > 0.0) & good, 1.0 / np.maximum(zinv, 1e-300), np.inf)
    center = view.result.depth[rows[hit], cols[hit]]
    out[hit] = np.where(good, plane, center)
    return out


def texel_visibility(
    mesh: Mesh,
    atlas: TextureAtlas,
    cams: CameraMats,
    depth: DepthMap,
    geometry: TexelGeometry | None = None,
    depth_eps: float | None = None,
    view: ViewRaster | None = None,
) -> TexelVisMap:
    """Which atlas texels does this view actually observe.

    A texel is visible when its surface point projects inside the
    frame, faces the camera (similarity > 0), and sits within
    depth_eps of the z-buffer surface at its pixel — the winning
    face's plane evaluated at the texel's exact projected position, so
    surface slope across the pixel cannot mask visibility. Entries are
    in texel scan order and each texel appears at most once.
    """
    if geometry is None:
        geometry = atlas_surface_geometry(mesh, atlas.resolution)
    if depth_eps is None:
        depth_eps = depth.depth_eps()
    if view is None:
        view = rasterize_view(mesh, cams)
    width, height = cams.image_size
    if depth.values.shape != (height, width):
        raise UltramanError("depth map does not match camera image size")

    xy, z = cams.project(geometry.position)
    col = np.floor(xy[:, 0]).astype(np.int64)
    row = np.floor(xy[:, 1]).astype(np.int64)
    ok = (
        (z > NEAR_EPS)
        & (col >= 0)
        & (col < width)
        & (row >= 0)
        & (row < height)
    )

    to_cam = cams.position[None, :] - geometry.position
    dlen = np.linalg.norm(to_cam, axis=1)
    dlen[dlen < 1e-20] = 1.0
    sim = np.clip((geometry.normal * (to_cam / dlen[:, None])).sum(axis=1), 0.0, 1.0)
    ok &= sim > 0.0

    idx = np.flatnonzero(ok)
    zbuf = _winner_plane_depth(view, mesh, cams, xy[idx], row[idx], col[idx])
    near_surface = np.abs(z[idx] - zbuf) <= depth_eps
    idx = idx[near_surface]

    return TexelVisMap(
        tex_row=geometry.tex_row[idx],
        tex_col=geometry.tex_col[idx],
        pix_row=row[idx].astype(np.int32),
        pix_col=col[idx].astype(np.int32),
        similarity=sim[idx],
        depth=z[idx],
        image_size=(width, height),
        atlas_resolution=atlas.resolution,
    )
