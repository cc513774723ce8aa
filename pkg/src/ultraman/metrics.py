"""PSNR and windowed SSIM, plus the four-view evaluation report.

SSIM follows the original windowed formulation: 11x11 Gaussian window
with sigma 1.5, stabilizers K1=0.01 / K2=0.03 on the 0..255 range,
population (window-weighted) covariance, and the outer 5-pixel rim
cropped so no partially-windowed value contributes.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from ultraman.errors import UltramanError
from ultraman.images import InputImage

WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5
K1 = 0.01
K2 = 0.03
DATA_RANGE = 255.0

# Serialized stand-in for infinite PSNR; survives JSON and CSV intact.
IDENTICAL = "identical"

EVAL_VIEW_AZIMUTHS = {
    "front": 0.0,
    "back": 180.0,
    "left": 90.0,
    "right": 270.0,
}


def _as_float_rgb(image: np.ndarray) -> np.ndarray:
    arr = np.asarray(image)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr.astype(np.float64)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB; inf for identical images."""
    fa, fb = _as_float_rgb(a), _as_float_rgb(b)
    if fa.shape != fb.shape:
        raise UltramanError(f"psnr dimension mismatch: {fa.shape} vs {fb.shape}")
    mse = float(((fa - fb) ** 2).mean())
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(DATA_RANGE * DATA_RANGE / mse)


def _gaussian_kernel() -> np.ndarray:
    radius = (WINDOW_SIZE - 1) // 2
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(offsets**2) / (2.0 * WINDOW_SIGMA**2))
    return k / k.sum()


def _window_filter(plane: np.ndarray) -> np.ndarray:
    k = _gaussian_kernel()
    out = ndimage.correlate1d(plane, k, axis=0, mode="reflect")
    return ndimage.correlate1d(out, k, axis=1, mode="reflect")


def ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-pixel single-channel SSIM on the window-valid interior.

    Returns the map cropped by the window radius on every side, so the
    border pixels whose windows spill outside never contribute.
    """
    fa = np.asarray(a, dtype=np.float64)
    fb = np.asarray(b, dtype=np.float64)
    if fa.shape != fb.shape or fa.ndim != 2:
        raise UltramanError("ssim_map expects two equal-shape 2-D arrays")
    if min(fa.shape) < WINDOW_SIZE:
        raise UltramanError(
            f"image side {min(fa.shape)} smaller than SSIM window {WINDOW_SIZE}"
        )
    c1 = (K1 * DATA_RANGE) ** 2
    c2 = (K2 * DATA_RANGE) ** 2
    mu_a = _window_filter(fa)
    mu_b = _window_filter(fb)
    var_a = _window_filter(fa * fa) - mu_a * mu_a
    var_b = _window_filter(fb * fb) - mu_b * mu_b
    cov = _window_filter(fa * fb) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    full = num / den
    r = (WINDOW_SIZE - 1) // 2
    return full[r:-r, r:-r]


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean SSIM; multi-channel inputs average their per-channel scores."""
    fa, fb = _as_float_rgb(a), _as_float_rgb(b)
    if fa.shape != fb.shape:
        raise UltramanError(f"ssim dimension mismatch: {fa.shape} vs {fb.shape}")
    scores = [
        float(ssim_map(fa[:, :, ch], fb[:, :, ch]).mean())
        for ch in range(fa.shape[2])
    ]
    return float(np.mean(scores))


def masked_ssim(a: np.ndarray, b: np.ndarray, mask: np.ndarray) -> float:
    """Mean SSIM over mask pixels (window-valid interior only)."""
    fa, fb = _as_float_rgb(a), _as_float_rgb(b)
    r = (WINDOW_SIZE - 1) // 2
    inner = mask[r:-r, r:-r]
    if not inner.any():
        # Mask lives entirely in the border rim; fall back to the full map.
        inner = np.ones_like(inner, dtype=bool)
    scores = []
    for ch in range(fa.shape[2]):
        m = ssim_map(fa[:, :, ch], fb[:, :, ch])
        scores.append(float(m[inner].mean()))
    return float(np.mean(scores))


def masked_psnr(a: np.ndarray, b: np.ndarray, mask: np.ndarray) -> float:
    fa, fb = _as_float_rgb(a), _as_float_rgb(b)
    if not mask.any():
        raise UltramanError("empty mask for psnr")
    diff = fa[mask] - fb[mask]
    mse = float((diff**2).mean())
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(DATA_RANGE * DATA_RANGE / mse)


def format_psnr(value: float) -> str | float:
    return IDENTICAL if math.isinf(value) else round(value, 4)


@dataclass
class EvalRow:
    """Scores for one of the four cardinal evaluation views."""

    view: str
    azimuth_deg: float
    psnr: float
    ssim: float
    foreground_pixels: int

    def to_record(self) -> dict:
        return {
            "view": self.view,
            "azimuth_deg": self.azimuth_deg,
            "psnr": format_psnr(self.psnr),
            "ssim": round(self.ssim, 6),
            # Learned-metric columns stay empty; external tooling may
            # fill them without changing the schema.
            "clip": "",
            "lpips": "",
            "foreground_pixels": self.foreground_pixels,
        }


def eval_views(
    mesh,
    atlas,
    references: dict[str, InputImage],
    render_resolution: int = 768,
    fov_deg: float = 45.0,
    distance: float | None = None,
) -> list[EvalRow]:
    """Score atlas renders against references at the 4 cardinal views.

    References arrive keyed front/back/left/right as RGBA with mattes;
    scoring runs over the union of the render's and the reference's
    foreground, with background forced to black on both sides.
    """
    from ultraman import meshcore, render as render_mod, views as views_mod

    missing = [k for k in EVAL_VIEW_AZIMUTHS if k not in references]
    if missing:
        raise UltramanError(f"missing reference images: {', '.join(missing)}")

    b = meshcore.bounds(mesh)
    if distance is None:
        _, radius = meshcore.bounding_center_radius(mesh)
        distance = views_mod.auto_distance(radius, fov_deg)

    rows: list[EvalRow] = []
    for name, azimuth in EVAL_VIEW_AZIMUTHS.items():
        ref = references[name]
        ref_fg = ref.foreground()
        if not ref_fg.any():
            raise UltramanError(f"reference '{name}' has no foreground")
        if (ref.height, ref.width) != (render_resolution, render_resolution):
            raise UltramanError(
                f"reference '{name}' is {ref.width}x{ref.height}, "
                f"expected {render_resolution}x{render_resolution}"
            )
        view = views_mod.Viewpoint(
            azimuth_deg=azimuth,
            elevation_deg=0.0,
            distance=distance,
            index=0,
            fov_deg=fov_deg,
        )
        cams = views_mod.camera_mats(view, b, render_resolution)
        shot = render_mod.render_color(mesh, atlas, cams)

        union = shot.foreground | ref_fg
        ours = shot.pixels[:, :, :3].copy()
        ours[~shot.foreground] = 0
        theirs = ref.pixels[:, :, :3].copy()
        theirs[~ref_fg] = 0

        rows.append(
            EvalRow(
                view=name,
                azimuth_deg=azimuth,
                psnr=masked_psnr(ours, theirs, union),
                ssim=masked_ssim(ours, theirs, union),
                foreground_pixels=int(union.sum()),
            )
        )
    return rows


def write_eval_reports(rows: list[EvalRow], csv_path: str | Path) -> Path:
    """Write the CSV report (and a JSON sibling); returns the JSON path."""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    records = [r.to_record() for r in rows]
    fields = list(records[0].keys())
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(records)
    json_path = csv_path.with_suffix(".json")
    with open(json_path, "w") as fh:
        json.dump({"views": records}, fh, indent=2)
        fh.write("\n")
    return json_path
