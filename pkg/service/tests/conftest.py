import json

import numpy as np
import pytest

from ultraman_service.protocol import image_to_png_b64


def sample_doc(width=32, height=32, seed=5, mode="generate", **extra) -> dict:
    depth = np.zeros((height, width), dtype=np.uint8)
    depth[4:-4, 4:-4] = np.linspace(30, 255, height - 8, dtype=np.uint8)[:, None]
    ref = np.zeros((height, width, 4), dtype=np.uint8)
    ref[6:-6, 6:-6] = (40, 180, 90, 255)
    doc = {
        "mode": mode,
        "reference_png_b64": image_to_png_b64(ref),
        "depth_png_b64": image_to_png_b64(depth),
        "prompt": "green coat, left side view, full body, plain background",
        "seed": seed,
        "width": width,
        "height": height,
        "view": {"azimuth_deg": 90.0, "elevation_deg": 0.0},
    }
    doc.update(extra)
    return doc


def encode(doc: dict) -> bytes:
    return json.dumps(doc).encode("utf-8")


@pytest.fixture
def doc() -> dict:
    return sample_doc()
