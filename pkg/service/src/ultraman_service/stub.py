"""Deterministic stand-in generator used when no model weights exist.

Output is a pure function of the request document: the RNG is seeded
from a hash of the canonical JSON encoding, so byte-identical (or
merely key-reordered) requests produce byte-identical images. The
image itself is honest about its conditioning without any model —
depth shades it, the reference photo tints it, and the silhouette
comes straight from the depth foreground:

* `generate`: foreground pixels get the reference's mean foreground
  color scaled by normalized depth, plus small seeded noise; alpha is
  255 exactly where depth > 0.
* `inpaint`: the reference resized to the request size, smoothed with
  a box blur inside the mask and untouched outside it; alpha 255.
"""

from __future__ import annotations

import hashlib

import numpy as np
from PIL import Image

from ultraman_service.protocol import GenerateRequest

MODEL_ID = "stub-depthshade-v1"
_NOISE_AMPLITUDE = 5
_SHADE_FLOOR = 0.30
_BLUR_RADIUS = 3  # 7x7 box


def _rng_for(request: GenerateRequest) -> np.random.Generator:
    digest = hashlib.sha256(request.canonical_bytes).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


def _foreground_tint(reference: np.ndarray) -> np.ndarray:
    fg = reference[..., 3] > 0
    if not fg.any():
        return np.array([128.0, 128.0, 128.0])
    return reference[..., :3][fg].mean(axis=0)


def _box_blur(channel: np.ndarray, radius: int) -> np.ndarray:
    """Separable moving-average blur with replicated edges."""
    out = channel.astype(np.float64)
    size = 2 * radius + 1
    for axis in (0, 1):
        padded = np.concatenate(
            [
                np.repeat(out.take([0], axis=axis), radius, axis=axis),
                out,
                np.repeat(out.take([-1], axis=axis), radius, axis=axis),
            ],
            axis=axis,
        )
        zero = np.zeros_like(padded.take([0], axis=axis))
        sums = np.concatenate([zero, np.cumsum(padded, axis=axis)], axis=axis)
        n = padded.shape[axis] + 1
        out = (
            sums.take(range(size, n), axis=axis)
            - sums.take(range(0, n - size), axis=axis)
        ) / size
    return out


def _resized_reference(request: GenerateRequest) -> np.ndarray:
    img = Image.fromarray(request.reference)
    if img.size != (request.width, request.height):
        img = img.resize((request.width, request.height), Image.NEAREST)
    return np.asarray(img)


def generate(request: GenerateRequest) -> np.ndarray:
    """Produce a deterministic RGBA image for a checked request."""
    if request.mode == "inpaint":
        return _inpaint(request)

    rng = _rng_for(request)
    tint = _foreground_tint(request.reference)
    shade = _SHADE_FLOOR + (1.0 - _SHADE_FLOOR) * (
        request.depth.astype(np.float64) / 255.0
    )
    noise = rng.integers(
        -_NOISE_AMPLITUDE, _NOISE_AMPLITUDE + 1, size=(request.height, request.width, 3)
    )
    rgb = np.clip(tint[None, None, :] * shade[..., None] + noise, 0, 255)

    out = np.zeros((request.height, request.width, 4), dtype=np.uint8)
    foreground = request.depth > 0
    out[..., :3] = np.where(foreground[..., None], rgb, 0).astype(np.uint8)
    out[..., 3] = np.where(foreground, 255, 0).astype(np.uint8)
    return out


def _inpaint(request: GenerateRequest) -> np.ndarray:
    base = _resized_reference(request).astype(np.float64)
    blurred = np.stack(
        [_box_blur(base[..., c], _BLUR_RADIUS) for c in range(3)], axis=-1
    )
    out = base[..., :3].copy()
    mask = request.mask
    out[mask] = blurred[mask]

    rgba = np.empty((request.height, request.width, 4), dtype=np.uint8)
    rgba[..., :3] = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    rgba[..., 3] = 255
    return rgba
