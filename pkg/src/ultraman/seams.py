"""Seam location and smoothing between mask regions of one view.

Seams appear where freshly projected pixels (NEW or UPDATE) meet
previously kept ones. The contact line is found by intersecting the
two regions' boundary maps with 1 px tolerance, widened to a band, and
the band is relaxed harmonically so the color transition spreads over
the band instead of jumping at the contact line.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from ultraman.errors import UltramanError
from ultraman.genmask import ALWAYS_KEEP, KEEP, NEW, UPDATE

# Pseudo-label for the keep family (KEEP or ALWAYS_KEEP together).
KEEP_FAMILY = -1

DEFAULT_DILATION_PX = 4

# Built-in smoother: sweep cap and per-channel convergence threshold
# on the 0..255 scale.
MAX_SWEEPS = 200
CONVERGENCE_DELTA = 0.5


def _label_region(labels: np.ndarray, label: int) -> np.ndarray:
    if label == KEEP_FAMILY:
        return (labels == KEEP) | (labels == ALWAYS_KEEP)
    if label in (KEEP, NEW, UPDATE, ALWAYS_KEEP):
        return labels == label
    raise UltramanError(f"no seam region for label {label}")


def canny_of_mask(labels: np.ndarray, label: int) -> np.ndarray:
    """Boundary pixels of one labeled region.

    For a binary region the edge set is the region minus its 3x3
    erosion: exactly the pixels with an 8-neighbor outside the region
    (pixels on the image border count as boundary).
    """
    region = _label_region(labels, label)
    if not region.any():
        return np.zeros_like(region)
    interior = ndimage.binary_erosion(
        region, structure=np.ones((3, 3), dtype=bool), border_value=0
    )
    return region & ~interior


def _disk(radius: int) -> np.ndarray:
    if radius <= 0:
        return np.ones((1, 1), dtype=bool)
    span = np.arange(-radius, radius + 1)
    yy, xx = np.meshgrid(span, span, indexing="ij")
    return (yy * yy + xx * xx) <= radius * radius


def seam_band(a: np.ndarray, b: np.ndarray, dilation_px: int) -> np.ndarray:
    """Band around the contact line of two edge maps.

    The tolerant intersection keeps pixels within 1 px (8-neighbor) of
    both edge sets; the band is its disk dilation by `dilation_px`.
    """
    if a.shape != b.shape:
        raise UltramanError(f"edge maps differ in shape: {a.shape} vs {b.shape}")
    if dilation_px < 0:
        raise UltramanError("dilation_px must be >= 0")
    three = np.ones((3, 3), dtype=bool)
    near_a = ndimage.binary_dilation(a, structure=three)
    near_b = ndimage.binary_dilation(b, structure=three)
    contact = near_a & near_b
    if dilation_px == 0 or not contact.any():
        return contact
    return ndimage.binary_dilation(contact, structure=_disk(dilation_px))


def seam_pair_for_view(
    labels: np.ndarray,
    seam_rule: str = "content",
    view_index: int | None = None,
) -> tuple[int, int]:
    """Which two regions meet at this view's seam.

    The content rule pairs the keep family with NEW when the view
    exposed any NEW pixels, with UPDATE otherwise. The index rule
    instead keys on the canonical view index: views 1..4 pair with
    NEW, all others with UPDATE.
    """
    if seam_rule == "content":
        has_new = bool((labels == NEW).any())
        return (KEEP_FAMILY, NEW if has_new else UPDATE)
    if seam_rule == "index":
        if view_index is None:
            raise UltramanError("index seam rule needs the view index")
        return (KEEP_FAMILY, NEW if 1 <= view_index <= 4 else UPDATE)
    raise UltramanError(f"unknown seam rule '{seam_rule}'")


def band_energy(image: np.ndarray, band: np.ndarray) -> float:
    """Total squared gradient magnitude over pixel pairs touching the band.

    Counts every 4-neighbor pair with at least one endpoint inside the
    band, per channel, on float values.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    total = 0.0
    dx = img[:, 1:] - img[:, :-1]
    pair_x = band[:, 1:] | band[:, :-1]
    total += float((dx[pair_x] ** 2).sum())
    dy = img[1:, :] - img[:-1, :]
    pair_y = band[1:, :] | band[:-1, :]
    total += float((dy[pair_y] ** 2).sum())
    return total


def smooth_seams(
    rendered: np.ndarray,
    band: np.ndarray,
    max_sweeps: int = MAX_SWEEPS,
) -> np.ndarray:
    """Harmonically relax the band; everything outside is untouched.

    Band pixels are unknowns of a Laplace problem whose Dirichlet data
    is the surrounding image (replicated at the frame border);
    red-black Gauss-Seidel sweeps run until the largest per-channel
    change drops under half a gray level. RGB channels relax; alpha is
    preserved as-is.
    """
    rendered = np.asarray(rendered)
    if band.shape != rendered.shape[:2]:
        raise UltramanError("band does not match image dimensions")
    if not band.any():
        return rendered.copy()

    # The relaxation only reads band pixels and their direct neighbors,
    # so solve on the band's bounding box plus a 1 px halo; identical
    # to the full-frame problem but much smaller.
    rows_any, cols_any = np.nonzero(band)
    y0 = max(int(rows_any.min()) - 1, 0)
    y1 = min(int(rows_any.max()) + 2, band.shape[0])
    x0 = max(int(cols_any.min()) - 1, 0)
    x1 = min(int(cols_any.max()) + 2, band.shape[1])

    sub_band = band[y0:y1, x0:x1]
    work = rendered[y0:y1, x0:x1, :3].astype(np.float64)
    h, w = sub_band.shape
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    parity = ((yy + xx + y0 + x0) & 1).astype(bool)
    halves = [sub_band & ~parity, sub_band & parity]
    halves = [np.nonzero(half) for half in halves if half.any()]

    def neighbor_mean(rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        up = work[np.maximum(rows - 1, 0), cols]
        down = work[np.minimum(rows + 1, h - 1), cols]
        left = work[rows, np.maximum(cols - 1, 0)]
        right = work[rows, np.minimum(cols + 1, w - 1)]
        return (up + down + left + right) / 4.0

    for _ in range(max_sweeps):
        delta = 0.0
        for rows, cols in halves:
            mean = neighbor_mean(rows, cols)
            change = mean - work[rows, cols]
            delta = max(delta, float(np.abs(change).max()))
            work[rows, cols] = mean
        if delta < CONVERGENCE_DELTA:
            break

    out = rendered.copy()
    rows, cols = np.nonzero(sub_band)
    out[rows + y0, cols + x0, :3] = np.clip(
        np.rint(work[rows, cols]), 0, 255
    ).astype(np.uint8)
    return out
