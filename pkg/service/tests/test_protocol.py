"""Request decoding: accepted shapes and every rejection path."""

import base64
import json

import numpy as np
import pytest

from conftest import encode, sample_doc
from ultraman_service.protocol import (
    RequestRejected,
    error_body,
    image_to_png_b64,
    ok_body,
    parse_request,
)


class TestAcceptedRequests:
    def test_generate_round_trip_fields(self, doc):
        req = parse_request(encode(doc))
        assert req.mode == "generate"
        assert req.width == req.height == 32
        assert req.seed == 5
        assert req.azimuth_deg == 90.0
        assert req.elevation_deg == 0.0
        assert req.prompt.startswith("green coat")
        assert req.reference.shape == (32, 32, 4)
        assert req.depth.shape == (32, 32)
        assert req.mask is None

    def test_canonical_bytes_ignore_key_order(self, doc):
        shuffled = dict(reversed(list(doc.items())))
        a = parse_request(encode(doc))
        b = parse_request(encode(shuffled))
        assert json.loads(encode(doc)) == json.loads(encode(shuffled))
        assert a.canonical_bytes == b.canonical_bytes

    def test_rgb_reference_gains_opaque_alpha(self, doc):
        rgb = np.full((32, 32, 3), 77, dtype=np.uint8)
        doc["reference_png_b64"] = image_to_png_b64(rgb)
        req = parse_request(encode(doc))
        assert req.reference.shape == (32, 32, 4)
        assert (req.reference[..., 3] == 255).all()

    def test_inpaint_mask_decoded_as_boolean(self, doc):
        mask = np.zeros((32, 32), dtype=np.uint8)
        mask[10:20, :] = 255
        doc["mode"] = "inpaint"
        doc["mask_png_b64"] = image_to_png_b64(mask)
        req = parse_request(encode(doc))
        assert req.mask.dtype == np.bool_
        assert req.mask.sum() == 10 * 32


class TestRejections:
    def rejects(self, raw: bytes, status: int, needle: str) -> None:
        with pytest.raises(RequestRejected) as info:
            parse_request(raw)
        assert info.value.status == status
        assert needle in info.value.reason

    def test_non_json_body(self):
        self.rejects(b"{oops", 400, "not valid JSON")

    def test_missing_field(self, doc):
        del doc["depth_png_b64"]
        self.rejects(encode(doc), 400, "schema")

    def test_invalid_mode(self, doc):
        doc["mode"] = "dream"
        self.rejects(encode(doc), 400, "schema")

    def test_unknown_top_level_key(self, doc):
        doc["negative_prompt"] = "blurry"
        self.rejects(encode(doc), 400, "schema")

    def test_non_integer_seed(self, doc):
        doc["seed"] = "seven"
        self.rejects(encode(doc), 400, "schema")

    def test_inpaint_without_mask(self, doc):
        doc["mode"] = "inpaint"
        self.rejects(encode(doc), 400, "mask_png_b64")

    def test_reference_not_a_png(self, doc):
        doc["reference_png_b64"] = base64.b64encode(b"hello").decode()
        self.rejects(encode(doc), 400, "reference_png_b64")

    def test_reference_not_base64(self, doc):
        doc["reference_png_b64"] = "!!!not-base64!!!"
        self.rejects(encode(doc), 400, "reference_png_b64")

    def test_depth_dimension_mismatch(self, doc):
        doc["width"] = 64
        self.rejects(encode(doc), 422, "64x32")

    def test_mask_dimension_mismatch(self, doc):
        wrong = np.zeros((8, 8), dtype=np.uint8)
        doc["mode"] = "inpaint"
        doc["mask_png_b64"] = image_to_png_b64(wrong)
        self.rejects(encode(doc), 422, "mask is 8x8")


class TestBodies:
    def test_ok_body_shape(self):
        img = np.zeros((4, 6, 4), dtype=np.uint8)
        doc = json.loads(ok_body(img, "model-x"))
        assert set(doc) == {"image_png_b64", "model_id"}
        assert doc["model_id"] == "model-x"

    def test_error_body_shape(self):
        assert json.loads(error_body("nope")) == {"error": "nope"}
