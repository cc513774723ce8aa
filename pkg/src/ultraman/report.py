"""Run and eval reports: JSON + CSV next to rendered matplotlib figures.

This module forces the Agg backend; everything here writes files and
never opens a window.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from ultraman.genmask import LABEL_COLORS, LABEL_NAMES  # noqa: E402

STEP_COLUMNS = [
    "order",
    "view_index",
    "azimuth_deg",
    "elevation_deg",
    "stage",
    "seconds",
    "coverage_after",
    "textured_texels",
    "ignore",
    "keep",
    "update",
    "new",
    "always_keep",
    "always_keep_violations",
    "seam_band_pixels",
    "band_energy_before",
    "band_energy_after",
    "model_id",
    "request_hash",
]


def _flat_step(order: int, step: dict) -> dict:
    counts = step.get("label_counts") or {}
    row = {
        "order": order,
        "view_index": step.get("view_index"),
        "azimuth_deg": step.get("azimuth_deg"),
        "elevation_deg": step.get("elevation_deg"),
        "stage": step.get("stage"),
        "seconds": round(step.get("seconds", 0.0), 3),
        "coverage_after": step.get("coverage_after"),
        "textured_texels": step.get("textured_texels"),
        "always_keep_violations": step.get("always_keep_violations", ""),
        "seam_band_pixels": step.get("seam_band_pixels", ""),
        "band_energy_before": step.get("band_energy_before", ""),
        "band_energy_after": step.get("band_energy_after", ""),
        "model_id": step.get("model_id", ""),
        "request_hash": step.get("request_hash", ""),
    }
    for name in LABEL_NAMES.values():
        row[name] = counts.get(name, "")
    return row


def write_run_reports(doc: dict, out_dir: str | Path) -> dict[str, Path]:
    """Write report.json, report.csv and the coverage figure.

    `doc` is the serialized run report; its "steps" list drives the CSV
    rows and the figure.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "report.json"
    with open(json_path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")

    steps = doc.get("steps", [])
    csv_path = out_dir / "report.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=STEP_COLUMNS)
        writer.writeheader()
        for order, step in enumerate(steps):
            writer.writerow(_flat_step(order, step))

    fig_path = out_dir / "coverage.png"
    coverage_figure(doc, fig_path)
    return {"json": json_path, "csv": csv_path, "figure": fig_path}


def coverage_figure(doc: dict, path: str | Path) -> None:
    """Coverage curve over the view schedule plus per-view label mix."""
    steps = doc.get("steps", [])
    labels = [f"{s.get('view_index')}" for s in steps]
    coverage = [s.get("coverage_after") or 0.0 for s in steps]

    fig, (ax_cov, ax_mix) = plt.subplots(2, 1, figsize=(8, 7), sharex=True)
    xs = list(range(len(steps)))
    ax_cov.plot(xs, coverage, marker="o", color="#2a6f97")
    ax_cov.set_ylabel("texel coverage")
    ax_cov.set_ylim(0.0, 1.02)
    ax_cov.grid(True, alpha=0.3)
    ax_cov.set_title("atlas coverage by view")

    bottoms = [0.0] * len(steps)
    order = ["new", "update", "keep", "always_keep", "ignore"]
    palette = {name: None for name in order}
    for value, name in LABEL_NAMES.items():
        rgb = LABEL_COLORS[value]
        palette[name] = tuple(c / 255.0 for c in rgb)
    for name in order:
        heights = []
        for s in steps:
            counts = s.get("label_counts") or {}
            heights.append(counts.get(name, 0))
        ax_mix.bar(
            xs,
            heights,
            bottom=bottoms,
            label=name,
            color=palette[name],
            edgecolor="black",
            linewidth=0.3,
        )
        bottoms = [b + h for b, h in zip(bottoms, heights)]
    ax_mix.set_ylabel("pixels")
    ax_mix.set_xlabel("view index (run order)")
    ax_mix.set_xticks(xs)
    ax_mix.set_xticklabels(labels)
    ax_mix.legend(fontsize=8, ncol=5)
    ax_mix.set_title("per-view pixel classification")

    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def eval_figure(records: list[dict], path: str | Path) -> None:
    """Bar chart of PSNR and SSIM per evaluated view."""
    names = [r["view"] for r in records]
    psnr = []
    capped = []
    for r in records:
        value = r["psnr"]
        if isinstance(value, str) or (
            isinstance(value, float) and math.isinf(value)
        ):
            psnr.append(None)
            capped.append(True)
        else:
            psnr.append(float(value))
            capped.append(False)
    finite = [p for p in psnr if p is not None]
    cap = max(finite) * 1.1 + 5.0 if finite else 60.0
    heights = [cap if p is None else p for p in psnr]
    ssim = [float(r["ssim"]) for r in records]

    fig, (ax_p, ax_s) = plt.subplots(1, 2, figsize=(9, 4))
    bars = ax_p.bar(names, heights, color="#4c956c")
    for bar, is_cap in zip(bars, capped):
        if is_cap:
            ax_p.text(
                bar.get_x() + bar.get_width() / 2,
                bar.get_height(),
                "identical",
                ha="center",
                va="bottom",
                fontsize=8,
                rotation=45,
            )
    ax_p.set_ylabel("PSNR (dB)")
    ax_p.set_title("masked PSNR")
    ax_p.grid(True, axis="y", alpha=0.3)

    ax_s.bar(names, ssim, color="#bc6c25")
    ax_s.set_ylabel("SSIM")
    ax_s.set_ylim(0.0, 1.05)
    ax_s.set_title("masked SSIM")
    ax_s.grid(True, axis="y", alpha=0.3)

    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
