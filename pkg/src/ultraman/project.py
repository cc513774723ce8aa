"""Back-projection of view images into the texture atlas.

The front photograph claims its texels permanently (protected); every
later view may only fill texels whose pixel was classified NEW or
UPDATE, and never touches a protected texel regardless of the mask.
"""

from __future__ import annotations

import numpy as np

from ultraman.atlas import STATUS_TEXTURED, TextureAtlas
from ultraman.errors import UltramanError
from ultraman.genmask import NEW, UPDATE
from ultraman.images import ALPHA_THRESHOLD, InputImage
from ultraman.render import TexelVisMap

FRONT_VIEW_INDEX = 1


def _sample_nearest(
    image: InputImage, pix_row: np.ndarray, pix_col: np.ndarray, view_size
) -> np.ndarray:
    """Sample at view pixels, rescaling when the image grid differs."""
    width, height = view_size
    if (image.width, image.height) == (width, height):
        return image.pixels[pix_row, pix_col]
    # Nearest pixel of the image under the view pixel's center.
    ix = np.floor((pix_col + 0.5) * image.width / width).astype(np.int64)
    iy = np.floor((pix_row + 0.5) * image.height / height).astype(np.int64)
    ix = np.clip(ix, 0, image.width - 1)
    iy = np.clip(iy, 0, image.height - 1)
    return image.pixels[iy, ix]


def _sample_bilinear(
    image: InputImage, pix_row: np.ndarray, pix_col: np.ndarray, view_size
) -> np.ndarray:
    """Bilinear RGBA sampling at view pixel centers (opt-in)."""
    width, height = view_size
    fx = (pix_col + 0.5) * image.width / width - 0.5
    fy = (pix_row + 0.5) * image.height / height - 0.5
    x0 = np.clip(np.floor(fx).astype(np.int64), 0, image.width - 1)
    y0 = np.clip(np.floor(fy).astype(np.int64), 0, image.height - 1)
    x1 = np.clip(x0 + 1, 0, image.width - 1)
    y1 = np.clip(y0 + 1, 0, image.height - 1)
    wx = np.clip(fx - x0, 0.0, 1.0)[:, None]
    wy = np.clip(fy - y0, 0.0, 1.0)[:, None]
    px = image.pixels.astype(np.float64)
    top = px[y0, x0] * (1.0 - wx) + px[y0, x1] * wx
    bot = px[y1, x0] * (1.0 - wx) + px[y1, x1] * wx
    return np.clip(np.rint(top * (1.0 - wy) + bot * wy), 0, 255).astype(np.uint8)


def _samples(
    image: InputImage,
    visibility: TexelVisMap,
    bilinear: bool,
) -> tuple[np.ndarray, np.ndarray]:
    sampler = _sample_bilinear if bilinear else _sample_nearest
    rgba = sampler(
        image,
        visibility.pix_row.astype(np.int64),
        visibility.pix_col.astype(np.int64),
        visibility.image_size,
    )
    return rgba, rgba[:, 3] >= ALPHA_THRESHOLD


def project_front(
    atlas: TextureAtlas,
    image: InputImage,
    visibility: TexelVisMap,
    bilinear: bool = False,
) -> TextureAtlas:
    """Project the photograph and protect everything it touched.

    Every visible texel whose sample lands on photo foreground gets the
    photo color, protected status, and the view's similarity as its
    best. Idempotent: projecting twice changes nothing.
    """
    if len(visibility) == 0:
        raise UltramanError("front view sees no texels; cannot seed the atlas")
    if visibility.atlas_resolution != atlas.resolution:
        raise UltramanError("visibility map was built for a different atlas")
    out = atlas.copy()
    rgba, fg = _samples(image, visibility, bilinear)
    trow = visibility.tex_row[fg]
    tcol = visibility.tex_col[fg]
    if trow.size == 0:
        raise UltramanError("front projection found no foreground samples")
    out.color[trow, tcol, :3] = rgba[fg, :3]
    out.color[trow, tcol, 3] = 255
    out.status[trow, tcol] = STATUS_TEXTURED
    out.protected[trow, tcol] = True
    out.best_similarity[trow, tcol] = np.maximum(
        out.best_similarity[trow, tcol],
        visibility.similarity[fg].astype(np.float32),
    )
    out.source_view[trow, tcol] = FRONT_VIEW_INDEX
    out.validate()
    return out


def project_view(
    atlas: TextureAtlas,
    image: InputImage,
    labels: np.ndarray,
    visibility: TexelVisMap,
    view_index: int,
    bilinear: bool = False,
) -> TextureAtlas:
    """Write a generated view into the atlas under mask control.

    Only texels whose pixel is labeled NEW or UPDATE are written, and
    protected texels are skipped unconditionally. best_similarity only
    ever rises.
    """
    width, height = visibility.image_size
    if labels.shape != (height, width):
        raise UltramanError("label map does not match view dimensions")
    if visibility.atlas_resolution != atlas.resolution:
        raise UltramanError("visibility map was built for a different atlas")
    out = atlas.copy()
    if len(visibility) == 0:
        return out

    pixel_label = labels[visibility.pix_row, visibility.pix_col]
    writable = (pixel_label == NEW) | (pixel_label == UPDATE)
    trow_all, tcol_all = visibility.tex_row, visibility.tex_col
    writable &= ~atlas.protected[trow_all, tcol_all]
    rgba, fg = _samples(image, visibility, bilinear)
    writable &= fg
    if not writable.any():
        return out

    trow = trow_all[writable]
    tcol = tcol_all[writable]
    out.color[trow, tcol, :3] = rgba[writable, :3]
    out.color[trow, tcol, 3] = 255
    out.status[trow, tcol] = STATUS_TEXTURED
    out.best_similarity[trow, tcol] = np.maximum(
        out.best_similarity[trow, tcol],
        visibility.similarity[writable].astype(np.float32),
    )
    out.source_view[trow, tcol] = np.int8(view_index)
    out.validate()
    return out
