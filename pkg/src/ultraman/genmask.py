"""Five-region classification of view pixels from per-texel history.

Labels are ordered so that numeric maximum equals classification
precedence when several texels land on the same pixel: a protected
texel pins the pixel no matter what else shares it, an untextured one
outranks update/keep, and so on down.
"""

from __future__ import annotations

import numpy as np

from ultraman.atlas import STATUS_TEXTURED, TextureAtlas
from ultraman.errors import UltramanError
from ultraman.render import SimilarityMap, TexelVisMap

IGNORE = 0
KEEP = 1
UPDATE = 2
NEW = 3
ALWAYS_KEEP = 4

LABEL_NAMES = {
    IGNORE: "ignore",
    KEEP: "keep",
    UPDATE: "update",
    NEW: "new",
    ALWAYS_KEEP: "always_keep",
}

# Debug palette for mask_i.png dumps.
LABEL_COLORS = {
    IGNORE: (0, 0, 0),
    KEEP: (0, 255, 0),
    UPDATE: (255, 255, 0),
    NEW: (255, 0, 0),
    ALWAYS_KEEP: (0, 0, 255),
}

DEFAULT_UPDATE_MARGIN = 0.1


def classify(
    visibility: TexelVisMap,
    atlas: TextureAtlas,
    similarity: SimilarityMap,
    update_margin: float = DEFAULT_UPDATE_MARGIN,
) -> np.ndarray:
    """Label every pixel of the view.

    Per visible texel: protected -> ALWAYS_KEEP, untextured -> NEW,
    textured with current similarity exceeding its best by more than
    `update_margin` -> UPDATE, textured otherwise -> KEEP. A pixel
    takes the highest-precedence label among its texels; foreground
    pixels no texel maps to, and background, stay IGNORE.

    Returns:
        (h, w) uint8 label map.
    """
    if not 0.0 <= update_margin < 1.0:
        raise UltramanError(f"update_margin {update_margin} outside [0, 1)")
    width, height = visibility.image_size
    if similarity.values.shape != (height, width):
        raise UltramanError("similarity map does not match view dimensions")
    if visibility.atlas_resolution != atlas.resolution:
        raise UltramanError("visibility map was built for a different atlas")

    labels = np.zeros((height, width), dtype=np.uint8)
    if len(visibility) == 0:
        return labels

    trow, tcol = visibility.tex_row, visibility.tex_col
    protected = atlas.protected[trow, tcol]
    textured = atlas.status[trow, tcol] == STATUS_TEXTURED
    best = atlas.best_similarity[trow, tcol].astype(np.float64)
    current = visibility.similarity

    texel_label = np.full(len(visibility), KEEP, dtype=np.uint8)
    texel_label[current > best + update_margin] = UPDATE
    texel_label[~textured] = NEW
    texel_label[protected] = ALWAYS_KEEP

    flat = visibility.pix_row.astype(np.int64) * width + visibility.pix_col
    out = labels.reshape(-1)
    np.maximum.at(out, flat, texel_label)
    return labels


def label_counts(labels: np.ndarray) -> dict[str, int]:
    """Histogram over the five labels, keyed by name."""
    counts = np.bincount(labels.reshape(-1), minlength=5)
    return {LABEL_NAMES[k]: int(counts[k]) for k in range(5)}


def mask_to_rgb(labels: np.ndarray) -> np.ndarray:
    """Render the label map with the fixed debug palette."""
    out = np.zeros((*labels.shape, 4), dtype=np.uint8)
    out[:, :, 3] = 255
    for label, color in LABEL_COLORS.items():
        out[labels == label, :3] = color
    return out
