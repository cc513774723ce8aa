"""The /v1/generate wire contract: schema, decoding, and error codes.

One endpoint, JSON in and JSON out. A request carries a reference
photo and a depth render (base64 PNG), a prompt, a seed, the output
dimensions, and the camera view; `inpaint` requests additionally carry
a mask. Success is `200 {"image_png_b64", "model_id"}`; every failure
is a JSON body with a single `error` string:

* 400 — the request is malformed: not JSON, schema violation, an
  inpaint without a mask, or an image that does not decode.
* 422 — the request parses but the depth (or mask) dimensions do not
  match the requested width x height.
* 500 — the generator itself failed.
"""

from __future__ import annotations

import base64
import io
import json
from dataclasses import dataclass

import jsonschema
import numpy as np
from PIL import Image

REQUEST_SCHEMA = {
    "type": "object",
    "required": [
        "mode",
        "reference_png_b64",
        "depth_png_b64",
        "prompt",
        "seed",
        "width",
        "height",
        "view",
    ],
    "properties": {
        "mode": {"enum": ["generate", "inpaint"]},
        "reference_png_b64": {"type": "string"},
        "depth_png_b64": {"type": "string"},
        "mask_png_b64": {"type": "string"},
        "prompt": {"type": "string"},
        "seed": {"type": "integer"},
        "width": {"type": "integer", "minimum": 1},
        "height": {"type": "integer", "minimum": 1},
        "view": {
            "type": "object",
            "required": ["azimuth_deg", "elevation_deg"],
            "properties": {
                "azimuth_deg": {"type": "number"},
                "elevation_deg": {"type": "number"},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


class RequestRejected(Exception):
    """A request the service refuses, with the HTTP status to send."""

    def __init__(self, status: int, reason: str):
        super().__init__(reason)
        self.status = status
        self.reason = reason


@dataclass
class GenerateRequest:
    """A fully decoded, dimension-checked request."""

    mode: str
    reference: np.ndarray  # (h, w, 4) uint8
    depth: np.ndarray  # (height, width) uint8
    mask: np.ndarray | None  # (height, width) bool
    prompt: str
    seed: int
    width: int
    height: int
    azimuth_deg: float
    elevation_deg: float
    canonical_bytes: bytes  # key-order-independent encoding of the document


def _decode_png(field: str, b64: str) -> np.ndarray:
    try:
        raw = base64.b64decode(b64, validate=True)
        with Image.open(io.BytesIO(raw)) as img:
            img.load()
            return np.asarray(img)
    except Exception as exc:  # pillow raises a zoo of types here
        raise RequestRejected(400, f"{field} does not decode as PNG: {exc}") from exc


def _as_rgba(field: str, pixels: np.ndarray) -> np.ndarray:
    if pixels.ndim == 2:
        rgba = np.empty(pixels.shape + (4,), dtype=np.uint8)
        rgba[..., :3] = pixels[..., None]
        rgba[..., 3] = 255
        return rgba
    if pixels.ndim == 3 and pixels.shape[2] == 3:
        return np.concatenate(
            [pixels, np.full(pixels.shape[:2] + (1,), 255, dtype=np.uint8)], axis=2
        )
    if pixels.ndim == 3 and pixels.shape[2] == 4:
        return pixels
    raise RequestRejected(400, f"{field} has unsupported channel layout")


def _as_gray(field: str, pixels: np.ndarray) -> np.ndarray:
    if pixels.ndim == 2:
        return pixels
    if pixels.ndim == 3:
        return pixels[..., 0]
    raise RequestRejected(400, f"{field} is not a single-channel image")


def parse_request(raw: bytes) -> GenerateRequest:
    """Decode raw body bytes into a checked request, or raise RequestRejected."""
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise RequestRejected(400, f"request body is not valid JSON: {exc}") from exc

    try:
        jsonschema.validate(doc, REQUEST_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise RequestRejected(400, f"request does not match schema: {exc.message}")

    if doc["mode"] == "inpaint" and "mask_png_b64" not in doc:
        raise RequestRejected(400, "inpaint requests require mask_png_b64")

    width, height = doc["width"], doc["height"]
    reference = _as_rgba("reference_png_b64", _decode_png("reference_png_b64", doc["reference_png_b64"]))
    depth = _as_gray("depth_png_b64", _decode_png("depth_png_b64", doc["depth_png_b64"]))
    if depth.shape != (height, width):
        raise RequestRejected(
            422,
            f"depth is {depth.shape[1]}x{depth.shape[0]} "
            f"but the request asks for {width}x{height}",
        )

    mask = None
    if "mask_png_b64" in doc:
        mask_px = _as_gray("mask_png_b64", _decode_png("mask_png_b64", doc["mask_png_b64"]))
        if mask_px.shape != (height, width):
            raise RequestRejected(
                422,
                f"mask is {mask_px.shape[1]}x{mask_px.shape[0]} "
                f"but the request asks for {width}x{height}",
            )
        mask = mask_px > 0

    return GenerateRequest(
        mode=doc["mode"],
        reference=reference,
        depth=depth,
        mask=mask,
        prompt=doc["prompt"],
        seed=int(doc["seed"]),
        width=width,
        height=height,
        azimuth_deg=float(doc["view"]["azimuth_deg"]),
        elevation_deg=float(doc["view"]["elevation_deg"]),
        canonical_bytes=json.dumps(
            doc, sort_keys=True, separators=(",", ":")
        ).encode("utf-8"),
    )


def image_to_png_b64(pixels: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(pixels).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def ok_body(image: np.ndarray, model_id: str) -> bytes:
    return json.dumps(
        {"image_png_b64": image_to_png_b64(image), "model_id": model_id}
    ).encode("utf-8")


def error_body(reason: str) -> bytes:
    return json.dumps({"error": reason}).encode("utf-8")
