"""Deterministic software triangle rasterization.

The z-buffer resolve packs (float32 depth bits, face index) into one
uint64 key and takes a running minimum per pixel. For non-negative
floats the IEEE bit pattern is monotone in the value, so the minimum
key is the nearest fragment, with exact depth ties broken toward the
lower face index. That makes the result independent of face submission
order, which end-to-end byte-identical reruns rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EMPTY_KEY = np.uint64(0xFFFFFFFFFFFFFFFF)

# Screen triangles with |doubled area| below this (px^2) are invisible.
MIN_DOUBLE_AREA = 1e-9


@dataclass
class RasterResult:
    """Per-pixel coverage of one rasterization pass.

    Attributes:
        face: (h, w) int32 face index per pixel, -1 where empty.
        depth: (h, w) float64 interpolated depth, +inf where empty.
            None when the pass ran without per-vertex depths.
        bary: (h, w, 3) float64 barycentric weights of the winning
            face at each covered pixel (perspective-correct when depths
            were given, affine otherwise); zeros where empty.
    """

    face: np.ndarray
    depth: np.ndarray | None
    bary: np.ndarray

    def covered(self) -> np.ndarray:
        return self.face >= 0


def _edge_weights(xy: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Signed edge functions at (px, py) for triangles xy (k, 3, 2).

    Returns (k, 3): w0 opposite vertex 0 (edge 1->2), w1 opposite
    vertex 1 (edge 2->0), w2 opposite vertex 2 (edge 0->1). Their sum
    equals the doubled signed triangle area.
    """
    w = np.empty((xy.shape[0], 3), dtype=np.float64)
    for i in range(3):
        a = xy[:, (i + 1) % 3]
        b = xy[:, (i + 2) % 3]
        w[:, i] = (b[:, 0] - a[:, 0]) * (py - a[:, 1]) - (b[:, 1] - a[:, 1]) * (
            px - a[:, 0]
        )
    return w


def rasterize_triangles(
    xy: np.ndarray,
    z: np.ndarray | None,
    height: int,
    width: int,
    chunk_budget: int = 4_000_000,
) -> RasterResult:
    """Rasterize triangles given in continuous pixel coordinates.

    Args:
        xy: (m, 3, 2) vertex positions; pixel (r, c) has center
            (c + 0.5, r + 0.5).
        z: (m, 3) strictly positive view-space depths, or None for a
            flat pass (UV-space rasterization) resolved by face index.
        height, width: framebuffer size.
        chunk_budget: max candidate fragments processed at once.

    Returns:
        RasterResult with face, depth (when z given) and barycentric
        maps. Triangles whose screen area is numerically zero are
        skipped.
    """
    xy = np.asarray(xy, dtype=np.float64)
    face_map = np.full((height, width), -1, dtype=np.int32)
    bary_map = np.zeros((height, width, 3), dtype=np.float64)
    depth_map = None
    if xy.shape[0] == 0:
        if z is not None:
            depth_map = np.full((height, width), np.inf)
        return RasterResult(face_map, depth_map, bary_map)

    area2 = (
        (xy[:, 1, 0] - xy[:, 0, 0]) * (xy[:, 2, 1] - xy[:, 0, 1])
        - (xy[:, 1, 1] - xy[:, 0, 1]) * (xy[:, 2, 0] - xy[:, 0, 0])
    )
    alive = np.abs(area2) > MIN_DOUBLE_AREA

    # Pixel-center bounding boxes, clipped to the framebuffer.
    minx = xy[:, :, 0].min(axis=1)
    maxx = xy[:, :, 0].max(axis=1)
    miny = xy[:, :, 1].min(axis=1)
    maxy = xy[:, :, 1].max(axis=1)
    c0 = np.maximum(np.ceil(minx - 0.5), 0).astype(np.int64)
    c1 = np.minimum(np.floor(maxx - 0.5), width - 1).astype(np.int64)
    r0 = np.maximum(np.ceil(miny - 0.5), 0).astype(np.int64)
    r1 = np.minimum(np.floor(maxy - 0.5), height - 1).astype(np.int64)
    box_w = c1 - c0 + 1
    box_h = r1 - r0 + 1
    alive &= (box_w > 0) & (box_h > 0)

    face_ids = np.flatnonzero(alive)
    if face_ids.size == 0:
        if z is not None:
            depth_map = np.full((height, width), np.inf)
        return RasterResult(face_map, depth_map, bary_map)

    counts = (box_w[face_ids] * box_h[face_ids]).astype(np.int64)
    buf = np.full(height * width, EMPTY_KEY, dtype=np.uint64)

    # Walk faces in chunks whose total candidate-fragment count stays
    # under the budget, so peak memory is bounded on dense meshes.
    csum = np.cumsum(counts)
    start = 0
    while start < face_ids.size:
        base = csum[start - 1] if start > 0 else 0
        stop = int(np.searchsorted(csum, base + chunk_budget, side="left")) + 1
        stop = min(max(stop, start + 1), face_ids.size)
        sel = face_ids[start:stop]
        n = counts[start:stop]
        total = int(n.sum())
        start = stop
        if total == 0:
            continue

        frag_face = np.repeat(sel, n)
        offsets = np.repeat(np.cumsum(n) - n, n)
        local = np.arange(total, dtype=np.int64) - offsets
        bw = box_w[frag_face]
        dr = local // bw
        dc = local - dr * bw
        pr = r0[frag_face] + dr
        pc = c0[frag_face] + dc
        px = pc.astype(np.float64) + 0.5
        py = pr.astype(np.float64) + 0.5

        tri = xy[frag_face]
        w = _edge_weights(tri, px, py)
        orient = np.where(area2[frag_face] >= 0.0, 1.0, -1.0)
        inside = (w * orient[:, None] >= 0.0).all(axis=1)
        if not inside.any():
            continue
        frag_face = frag_face[inside]
        pr = pr[inside]
        pc = pc[inside]
        flat = pr * width + pc

        if z is not None:
            lam = w[inside] / area2[frag_face][:, None]
            zinv = (lam / z[frag_face]).sum(axis=1)
            # Guard against division blow-ups from degenerate depths.
            zinv = np.maximum(zinv, 1e-300)
            depth = (1.0 / zinv).astype(np.float32)
            depth = np.maximum(depth, np.float32(0.0))
            key = (depth.view(np.uint32).astype(np.uint64) << np.uint64(32)) | (
                frag_face.astype(np.uint64)
            )
        else:
            key = frag_face.astype(np.uint64)
        np.minimum.at(buf, flat, key)

    hit = buf != EMPTY_KEY
    face_flat = np.where(
        hit, (buf & np.uint64(0xFFFFFFFF)).astype(np.int64), -1
    )
    face_map = face_flat.reshape(height, width).astype(np.int32)

    # Second pass: exact float64 barycentrics and depth for the winners
    # only, so attribute interpolation is not quantized by the packed
    # float32 z-buffer keys.
    rows, cols = np.nonzero(face_map >= 0)
    if z is not None:
        depth_map = np.full((height, width), np.inf)
    if rows.size:
        f = face_map[rows, cols].astype(np.int64)
        px = cols.astype(np.float64) + 0.5
        py = rows.astype(np.float64) + 0.5
        w = _edge_weights(xy[f], px, py)
        lam = w / area2[f][:, None]
        if z is not None:
            zf = z[f]
            lam_over_z = lam / zf
            zinv = lam_over_z.sum(axis=1)
            zinv = np.maximum(zinv, 1e-300)
            depth_map[rows, cols] = 1.0 / zinv
            lam = lam_over_z / zinv[:, None]  # perspective-correct weights
        bary_map[rows, cols] = lam
    return RasterResult(face_map, depth_map, bary_map)


def interpolate(
    result: RasterResult, faces: np.ndarray, attribute: np.ndarray
) -> np.ndarray:
    """Interpolate a per-vertex attribute over all covered pixels.

    Args:
        result: output of rasterize_triangles.
        faces: (m, 3) vertex indices matching the rasterized triangles.
        attribute: (n_vertices, k) per-vertex values.

    Returns:
        (h, w, k) float64 map, zeros where uncovered.
    """
    attribute = np.asarray(attribute, dtype=np.float64)
    flat_attr = attribute.reshape(attribute.shape[0], -1)
    h, w = result.face.shape
    out = np.zeros((h, w, flat_attr.shape[1]), dtype=np.float64)
    rows, cols = np.nonzero(result.face >= 0)
    if rows.size:
        f = result.face[rows, cols].astype(np.int64)
        corners = flat_attr[faces[f]]  # (npix, 3, k)
        lam = result.bary[rows, cols]
        out[rows, cols] = np.einsum("pk,pkc->pc", lam, corners)
    return out
