"""RGBA image container, PNG round-trips, and foreground matting."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ultraman.errors import UltramanError

# Alpha at or above this counts as foreground when no explicit mask is given.
ALPHA_THRESHOLD = 128


@dataclass
class InputImage:
    """8-bit RGBA image whose alpha channel doubles as the foreground matte."""

    pixels: np.ndarray  # (h, w, 4) uint8

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 4 or px.dtype != np.uint8:
            raise UltramanError(
                f"expected (h, w, 4) uint8 pixels, got {px.shape} {px.dtype}"
            )
        self.pixels = px

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    def foreground(self) -> np.ndarray:
        """Boolean (h, w) matte: alpha at or above the threshold."""
        return self.pixels[:, :, 3] >= ALPHA_THRESHOLD

    def copy(self) -> "InputImage":
        return InputImage(self.pixels.copy())


def load_image(path: str | Path) -> InputImage:
    """Load any PIL-readable image, converting to RGBA."""
    path = Path(path)
    if not path.is_file():
        raise UltramanError(f"image not found: {path}")
    try:
        with Image.open(path) as im:
            rgba = im.convert("RGBA")
            pixels = np.asarray(rgba, dtype=np.uint8).copy()
    except UltramanError:
        raise
    except Exception as exc:
        raise UltramanError(f"cannot read image {path}: {exc}") from exc
    return InputImage(pixels)


def save_image(image: InputImage | np.ndarray, path: str | Path) -> None:
    """Write RGBA (or grayscale uint8/uint16) pixels as PNG."""
    px = image.pixels if isinstance(image, InputImage) else np.asarray(image)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(px).save(path)


def apply_matte(image: InputImage, mask: np.ndarray | None = None) -> InputImage:
    """Force a hard binary alpha matte onto `image`.

    With an explicit boolean `mask`, background pixels get alpha 0 and
    foreground pixels keep their alpha. Without one, the existing alpha
    is thresholded to {0, 255}. An image left with no foreground at all
    is rejected, since the pipeline has nothing to project.
    """
    out = image.pixels.copy()
    if mask is not None:
        mask = np.asarray(mask)
        if mask.shape != out.shape[:2]:
            raise UltramanError(
                f"mask shape {mask.shape} does not match image {out.shape[:2]}"
            )
        out[:, :, 3] = np.where(mask.astype(bool), out[:, :, 3], 0)
    else:
        out[:, :, 3] = np.where(out[:, :, 3] >= ALPHA_THRESHOLD, 255, 0)
    if not (out[:, :, 3] >= ALPHA_THRESHOLD).any():
        raise UltramanError("matte left no foreground pixels")
    return InputImage(out)
