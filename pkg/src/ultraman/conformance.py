"""Wire-protocol conformance suite for generation services.

Any implementation of the /v1/generate contract — in-process or over
real HTTP — can be exercised through a single transport callable, so
the same checks validate the reference service, the mock, and whatever
a deployment provides.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np
import jsonschema

from ultraman.genbackend import image_to_png_b64, png_b64_to_array

# transport(raw_json_bytes) -> (http_status, response_body_bytes)
Transport = Callable[[bytes], tuple[int, bytes]]

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

RESPONSE_SCHEMA = {
    "type": "object",
    "required": ["image_png_b64", "model_id"],
    "properties": {
        "image_png_b64": {"type": "string"},
        "model_id": {"type": "string"},
    },
}

ERROR_SCHEMA = {
    "type": "object",
    "required": ["error"],
    "properties": {"error": {"type": "string"}},
}


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def __str__(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.name}" + (f": {self.detail}" if self.detail else "")


def _sample_request(width: int = 48, height: int = 48, seed: int = 7) -> dict:
    """Small, fully valid generate request used by the positive checks."""
    depth = np.zeros((height, width), dtype=np.uint8)
    depth[8:-8, 8:-8] = np.linspace(40, 255, height - 16, dtype=np.uint8)[:, None]
    ref = np.zeros((height, width, 4), dtype=np.uint8)
    ref[10:-10, 10:-10] = (200, 60, 40, 255)
    return {
        "mode": "generate",
        "reference_png_b64": image_to_png_b64(ref),
        "depth_png_b64": image_to_png_b64(depth),
        "prompt": "red jacket, front view, full body, plain background",
        "seed": seed,
        "width": width,
        "height": height,
        "view": {"azimuth_deg": 0.0, "elevation_deg": 0.0},
    }


def _post(transport: Transport, payload: dict) -> tuple[int, bytes]:
    return transport(json.dumps(payload).encode("utf-8"))


def _json_error_body(body: bytes) -> str | None:
    """None when the body is a valid error document, else a complaint."""
    try:
        doc = json.loads(body.decode("utf-8"))
    except (ValueError, UnicodeDecodeError):
        return "body is not JSON"
    try:
        jsonschema.validate(doc, ERROR_SCHEMA)
    except jsonschema.ValidationError as exc:
        return f"error body invalid: {exc.message}"
    return None


def run_conformance(transport: Transport) -> list[CheckResult]:
    """Run every protocol check against a service transport.

    The transport takes the raw request body bytes and returns
    (status, body); it must not raise for non-200 statuses.
    """
    results: list[CheckResult] = []

    def check(name: str, passed: bool, detail: str = "") -> None:
        results.append(CheckResult(name, bool(passed), detail))

    # --- positive path -----------------------------------------------
    req = _sample_request()
    jsonschema.validate(req, REQUEST_SCHEMA)  # suite self-check
    status, body = _post(transport, req)
    ok_status = status == 200
    check("generate_returns_200", ok_status, f"got {status}")
    doc = None
    if ok_status:
        try:
            doc = json.loads(body.decode("utf-8"))
            jsonschema.validate(doc, RESPONSE_SCHEMA)
            check("response_schema_valid", True)
        except (ValueError, jsonschema.ValidationError) as exc:
            check("response_schema_valid", False, str(exc)[:200])
            doc = None
    else:
        check("response_schema_valid", False, "no 200 response to validate")

    if doc is not None:
        try:
            pixels = png_b64_to_array(doc["image_png_b64"])
            dims_ok = pixels.shape[:2] == (req["height"], req["width"])
            check(
                "image_dimensions_match_request",
                dims_ok,
                f"got {pixels.shape[1]}x{pixels.shape[0]}",
            )
        except Exception as exc:  # noqa: BLE001 - report, don't crash the suite
            check("image_dimensions_match_request", False, str(exc)[:200])
    else:
        check("image_dimensions_match_request", False, "no decodable response")

    # --- determinism under a fixed seed ------------------------------
    status_a, body_a = _post(transport, req)
    status_b, body_b = _post(transport, req)
    same = status_a == status_b == 200
    if same:
        try:
            img_a = json.loads(body_a)["image_png_b64"]
            img_b = json.loads(body_b)["image_png_b64"]
            same = img_a == img_b
        except (ValueError, KeyError):
            same = False
    check("fixed_seed_is_deterministic", same)

    # --- inpaint-mask contract ----------------------------------------
    mask = np.zeros((req["height"], req["width"]), dtype=np.uint8)
    mask[20:30, 10:-10] = 255
    inpaint = dict(req)
    inpaint["mode"] = "inpaint"
    inpaint["mask_png_b64"] = image_to_png_b64(mask)
    status, body = _post(transport, inpaint)
    ok = status == 200
    detail = f"got {status}"
    if ok:
        try:
            doc = json.loads(body.decode("utf-8"))
            jsonschema.validate(doc, RESPONSE_SCHEMA)
            pixels = png_b64_to_array(doc["image_png_b64"])
            ok = pixels.shape[:2] == (req["height"], req["width"])
            detail = "" if ok else f"bad dims {pixels.shape[:2]}"
        except (ValueError, jsonschema.ValidationError) as exc:
            ok, detail = False, str(exc)[:200]
    check("inpaint_with_mask_succeeds", ok, detail)

    no_mask = dict(inpaint)
    del no_mask["mask_png_b64"]
    status, body = _post(transport, no_mask)
    complaint = _json_error_body(body)
    check(
        "inpaint_without_mask_is_400",
        status == 400 and complaint is None,
        f"got {status}" + (f", {complaint}" if complaint else ""),
    )

    # --- malformed requests -------------------------------------------
    status, body = transport(b"{not json at all")
    complaint = _json_error_body(body)
    check(
        "malformed_json_is_400",
        status == 400 and complaint is None,
        f"got {status}" + (f", {complaint}" if complaint else ""),
    )

    missing = dict(req)
    del missing["depth_png_b64"]
    status, body = _post(transport, missing)
    complaint = _json_error_body(body)
    check(
        "missing_field_is_400",
        status == 400 and complaint is None,
        f"got {status}" + (f", {complaint}" if complaint else ""),
    )

    bad_mode = dict(req)
    bad_mode["mode"] = "hallucinate"
    status, body = _post(transport, bad_mode)
    complaint = _json_error_body(body)
    check(
        "invalid_mode_is_400",
        status == 400 and complaint is None,
        f"got {status}" + (f", {complaint}" if complaint else ""),
    )

    # --- dimension contract -------------------------------------------
    mismatched = dict(req)
    mismatched["width"] = req["width"] * 2
    status, body = _post(transport, mismatched)
    complaint = _json_error_body(body)
    check(
        "depth_dimension_mismatch_is_422",
        status == 422 and complaint is None,
        f"got {status}" + (f", {complaint}" if complaint else ""),
    )

    return results
