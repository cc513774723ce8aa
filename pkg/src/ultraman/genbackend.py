"""Generation backends: reference routing, the deterministic mock, and
the HTTP client for a real depth-conditioned generation service.

The wire protocol (shared with any remote implementation):
POST {base_url}/v1/generate with JSON
    {mode, reference_png_b64, depth_png_b64, mask_png_b64?, prompt,
     seed, width, height, view: {azimuth_deg, elevation_deg}}
returning 200 {image_png_b64, model_id} or an error status with
{error}.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import logging
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
import requests
from PIL import Image
from scipy import ndimage

from ultraman.errors import BackendError
from ultraman.images import InputImage
from ultraman.views import Viewpoint

logger = logging.getLogger(__name__)

GENERATE_PATH = "/v1/generate"
ENV_BACKEND_URL = "ULTRAMAN_BACKEND_URL"

# Front-facing horizontal azimuths: these condition on the photograph.
FRONT_FACING_AZIMUTHS = frozenset({0.0, 45.0, 315.0, 90.0, 270.0})
REAR_AZIMUTHS = frozenset({135.0, 225.0})
BACK_AZIMUTH = 180.0


@dataclass
class GenRequest:
    """One generation call: conditioning images plus prompt and seed."""

    mode: str  # "generate" or "inpaint"
    reference: InputImage
    depth: np.ndarray  # (h, w) uint8 conditioning depth
    prompt: str
    seed: int
    width: int
    height: int
    azimuth_deg: float
    elevation_deg: float
    mask: np.ndarray | None = None  # (h, w) bool, inpaint only

    def validate(self) -> None:
        if self.mode not in ("generate", "inpaint"):
            raise BackendError(f"unknown mode '{self.mode}'")
        if self.depth.shape != (self.height, self.width):
            raise BackendError(
                f"depth {self.depth.shape} does not match requested "
                f"{self.height}x{self.width}"
            )
        if self.mode == "inpaint" and self.mask is None:
            raise BackendError("inpaint request without a mask")
        if self.mask is not None and self.mask.shape != (self.height, self.width):
            raise BackendError("mask does not match requested dimensions")


@dataclass
class GenImage:
    """A backend's output plus provenance for the run report."""

    image: InputImage
    model_id: str
    seed: int
    request_hash: str


def image_to_png_b64(pixels: np.ndarray) -> str:
    arr = np.asarray(pixels)
    if arr.ndim == 2:
        pil = Image.fromarray(arr, mode="L")
    else:
        pil = Image.fromarray(arr)
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def png_b64_to_array(data: str) -> np.ndarray:
    try:
        raw = base64.b64decode(data, validate=True)
        with Image.open(io.BytesIO(raw)) as im:
            im.load()
            if im.mode in ("L", "I;16"):
                return np.asarray(im.convert("L"), dtype=np.uint8).copy()
            return np.asarray(im.convert("RGBA"), dtype=np.uint8).copy()
    except BackendError:
        raise
    except Exception as exc:
        raise BackendError(f"undecodable PNG payload: {exc}") from exc


def request_to_wire(req: GenRequest) -> dict:
    req.validate()
    body = {
        "mode": req.mode,
        "reference_png_b64": image_to_png_b64(req.reference.pixels),
        "depth_png_b64": image_to_png_b64(req.depth),
        "prompt": req.prompt,
        "seed": int(req.seed),
        "width": int(req.width),
        "height": int(req.height),
        "view": {
            "azimuth_deg": float(req.azimuth_deg),
            "elevation_deg": float(req.elevation_deg),
        },
    }
    if req.mask is not None:
        body["mask_png_b64"] = image_to_png_b64(
            (req.mask.astype(np.uint8)) * 255
        )
    return body


def request_hash(wire_body: dict) -> str:
    canonical = json.dumps(wire_body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def select_reference(
    view: Viewpoint,
    front: InputImage,
    back: InputImage | None,
) -> InputImage:
    """Which image conditions this view's generation.

    The 180-degree view and everything on the front half condition on
    the photograph; rear-side and vertical views need the generated
    back image, and asking for them before it exists is a pipeline
    ordering bug surfaced as an error.
    """
    az = view.azimuth_deg % 360.0
    el = view.elevation_deg
    if abs(el) >= 90.0 or az in REAR_AZIMUTHS:
        if back is None:
            raise BackendError(
                f"view {view.index} (azimuth {az}, elevation {el}) needs the "
                "back reference image, but the 180-degree view has not run"
            )
        return back
    if az == BACK_AZIMUTH or az in FRONT_FACING_AZIMUTHS:
        return front
    # Config-overridden azimuths: front hemisphere uses the photo.
    if az < 90.0 or az > 270.0:
        return front
    if back is None:
        raise BackendError(
            f"view {view.index} (azimuth {az}) needs the back reference "
            "image, but the 180-degree view has not run"
        )
    return back


class MockBackend:
    """Hermetic stand-in for the generation service.

    The output is a pure function of the request bytes: the depth map
    is shaded and tinted with the mean foreground color of the
    reference image, plus low-amplitude hash-seeded noise. Geometry
    consistency checks downstream stay meaningful because the output
    silhouette is exactly the conditioning depth's silhouette.
    """

    def __init__(self, model_id: str = "mock-shaded-v1"):
        self.model_id = model_id

    def generate(self, req: GenRequest) -> GenImage:
        req.validate()
        wire = request_to_wire(req)
        digest = request_hash(wire)
        rng = np.random.default_rng(int(digest[:16], 16))

        ref = req.reference.pixels
        ref_fg = ref[:, :, 3] > 127
        if ref_fg.any():
            tint = ref[ref_fg, :3].astype(np.float64).mean(axis=0)
        else:
            tint = np.array([128.0, 128.0, 128.0])

        depth = req.depth.astype(np.float64)
        fg = req.depth > 0
        shade = 0.35 + 0.65 * depth / 255.0
        rgb = tint[None, None, :] * shade[:, :, None]
        noise = rng.integers(-4, 5, size=rgb.shape).astype(np.float64)
        rgb = np.clip(np.rint(rgb + noise), 0, 255).astype(np.uint8)

        out = np.zeros((req.height, req.width, 4), dtype=np.uint8)
        out[fg, :3] = rgb[fg]
        out[fg, 3] = 255

        if req.mode == "inpaint":
            base = np.array(
                Image.fromarray(ref).resize(
                    (req.width, req.height), Image.NEAREST
                ),
                dtype=np.uint8,
            )
            blurred = np.empty_like(base)
            for ch in range(4):
                blurred[:, :, ch] = ndimage.uniform_filter(
                    base[:, :, ch], size=9, mode="nearest"
                )
            out = base.copy()
            out[req.mask] = blurred[req.mask]

        return GenImage(
            image=InputImage(out),
            model_id=self.model_id,
            seed=req.seed,
            request_hash=digest,
        )


class RemoteBackend:
    """HTTP client for a wire-protocol generation service.

    Transport failures and 5xx responses are retried with exponential
    backoff; 4xx responses surface immediately since retrying a
    rejected request cannot help.
    """

    def __init__(
        self,
        base_url: str,
        timeout: float = 120.0,
        max_attempts: int = 3,
        backoff_base: float = 1.0,
        sleeper: Callable[[float], None] = time.sleep,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self._sleep = sleeper
        self._session = session or requests.Session()
        self.model_id = f"remote:{self.base_url}"

    def generate(self, req: GenRequest) -> GenImage:
        wire = request_to_wire(req)
        digest = request_hash(wire)
        url = self.base_url + GENERATE_PATH
        last_error: str = "no attempt made"
        for attempt in range(1, self.max_attempts + 1):
            try:
                resp = self._session.post(url, json=wire, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = f"transport failure: {exc}"
                logger.warning(
                    "backend attempt %d/%d failed: %s",
                    attempt,
                    self.max_attempts,
                    last_error,
                )
                if attempt < self.max_attempts:
                    self._sleep(self.backoff_base * 2 ** (attempt - 1))
                continue
            if resp.status_code >= 500:
                last_error = f"server error {resp.status_code}: {_error_of(resp)}"
                logger.warning(
                    "backend attempt %d/%d failed: %s",
                    attempt,
                    self.max_attempts,
                    last_error,
                )
                if attempt < self.max_attempts:
                    self._sleep(self.backoff_base * 2 ** (attempt - 1))
                continue
            if resp.status_code != 200:
                raise BackendError(
                    f"backend rejected request ({resp.status_code}): "
                    f"{_error_of(resp)}"
                )
            return self._parse(resp, req, digest)
        raise BackendError(
            f"backend failed after {self.max_attempts} attempts; last: {last_error}"
        )

    def _parse(self, resp, req: GenRequest, digest: str) -> GenImage:
        try:
            body = resp.json()
        except ValueError as exc:
            raise BackendError(f"backend returned non-JSON body: {exc}") from exc
        if "image_png_b64" not in body or "model_id" not in body:
            raise BackendError("backend response missing image_png_b64/model_id")
        pixels = png_b64_to_array(body["image_png_b64"])
        if pixels.ndim != 3:
            raise BackendError("backend returned a non-RGBA image")
        if pixels.shape[:2] != (req.height, req.width):
            raise BackendError(
                f"backend returned {pixels.shape[1]}x{pixels.shape[0]} "
                f"for a {req.width}x{req.height} request"
            )
        return GenImage(
            image=InputImage(pixels),
            model_id=str(body["model_id"]),
            seed=req.seed,
            request_hash=digest,
        )


def _error_of(resp) -> str:
    try:
        return str(resp.json().get("error", resp.text[:200]))
    except ValueError:
        return resp.text[:200]
