"""Stub generator: determinism and conditioning behavior."""

import numpy as np

from conftest import encode, sample_doc
from ultraman_service import stub
from ultraman_service.protocol import image_to_png_b64, parse_request


def generate(doc):
    return stub.generate(parse_request(encode(doc)))


class TestDeterminism:
    def test_identical_requests_identical_bytes(self, doc):
        assert np.array_equal(generate(doc), generate(doc))

    def test_key_order_does_not_matter(self, doc):
        shuffled = dict(reversed(list(doc.items())))
        assert np.array_equal(generate(doc), generate(shuffled))

    def test_seed_changes_output(self, doc):
        other = sample_doc(seed=6)
        assert not np.array_equal(generate(doc), generate(other))


class TestGenerateMode:
    def test_alpha_is_exactly_the_depth_foreground(self, doc):
        req = parse_request(encode(doc))
        out = stub.generate(req)
        assert np.array_equal(out[..., 3] == 255, req.depth > 0)
        assert ((out[..., 3] == 0) | (out[..., 3] == 255)).all()

    def test_background_pixels_are_zero(self, doc):
        req = parse_request(encode(doc))
        out = stub.generate(req)
        assert (out[req.depth == 0] == 0).all()

    def test_reference_tint_dominates(self):
        # Pure-green reference: the green channel must outweigh red/blue.
        ref = np.zeros((32, 32, 4), dtype=np.uint8)
        ref[8:-8, 8:-8] = (0, 200, 0, 255)
        doc = sample_doc(reference_png_b64=image_to_png_b64(ref))
        req = parse_request(encode(doc))
        out = stub.generate(req).astype(int)
        fg = req.depth > 0
        assert out[..., 1][fg].mean() > out[..., 0][fg].mean() + 30
        assert out[..., 1][fg].mean() > out[..., 2][fg].mean() + 30

    def test_deeper_depth_brightens(self, doc):
        req = parse_request(encode(doc))
        out = stub.generate(req)
        shallow = (req.depth > 0) & (req.depth < 80)
        deep = req.depth > 200
        assert deep.any() and shallow.any()
        assert out[..., :3][deep].mean() > out[..., :3][shallow].mean()

    def test_transparent_reference_falls_back_to_gray(self, doc):
        clear = np.zeros((32, 32, 4), dtype=np.uint8)
        doc["reference_png_b64"] = image_to_png_b64(clear)
        req = parse_request(encode(doc))
        out = stub.generate(req).astype(float)
        deep = req.depth == 255
        # tint 128 at full shade, plus bounded noise
        assert abs(out[..., :3][deep].mean() - 128.0) < stub._NOISE_AMPLITUDE + 1


class TestInpaintMode:
    def inpaint_doc(self, mask):
        return sample_doc(mode="inpaint", mask_png_b64=image_to_png_b64(mask))

    def test_untouched_outside_mask(self):
        mask = np.zeros((32, 32), dtype=np.uint8)
        mask[12:20, 12:20] = 255
        req = parse_request(encode(self.inpaint_doc(mask)))
        out = stub.generate(req)
        outside = ~req.mask
        assert np.array_equal(out[..., :3][outside], req.reference[..., :3][outside])
        assert (out[..., 3] == 255).all()

    def test_constant_reference_is_a_fixed_point(self):
        mask = np.zeros((32, 32), dtype=np.uint8)
        mask[5:25, 5:25] = 255
        ref = np.full((32, 32, 4), (9, 90, 200, 255), dtype=np.uint8)
        doc = self.inpaint_doc(mask)
        doc["reference_png_b64"] = image_to_png_b64(ref)
        out = stub.generate(parse_request(encode(doc)))
        assert np.array_equal(out[..., :3], ref[..., :3])

    def test_blur_actually_smooths_inside_mask(self):
        rng = np.random.default_rng(3)
        ref = rng.integers(0, 256, size=(32, 32, 4), dtype=np.uint8)
        ref[..., 3] = 255
        mask = np.full((32, 32), 255, dtype=np.uint8)
        doc = self.inpaint_doc(mask)
        doc["reference_png_b64"] = image_to_png_b64(ref)
        out = stub.generate(parse_request(encode(doc))).astype(np.int64)

        def grad_energy(rgb):
            gx = np.diff(rgb, axis=1)
            gy = np.diff(rgb, axis=0)
            return (gx**2).sum() + (gy**2).sum()

        assert grad_energy(out[..., :3]) < grad_energy(ref[..., :3].astype(np.int64))

    def test_reference_resized_to_request_dimensions(self):
        small_ref = np.full((8, 8, 4), (200, 10, 10, 255), dtype=np.uint8)
        mask = np.zeros((32, 32), dtype=np.uint8)
        doc = self.inpaint_doc(mask)
        doc["reference_png_b64"] = image_to_png_b64(small_ref)
        out = stub.generate(parse_request(encode(doc)))
        assert out.shape == (32, 32, 4)
        assert (out[..., 0] == 200).all()
