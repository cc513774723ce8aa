"""Shared fixtures: synthetic fixture sets and completed pipeline runs.

Session-scoped so the expensive artifacts (meshes, photos, finished
runs) are built once and shared; tests that mutate outputs get their
own copies.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from ultraman import fixtures, pipeline
from ultraman.images import InputImage


def load_json(path: Path) -> dict:
    with open(path) as fh:
        return json.load(fh)


@dataclass
class CompletedRun:
    """A finished pipeline run plus everything needed to inspect it."""

    config: pipeline.RunConfig
    report: pipeline.RunReport
    out_dir: Path
    seconds: float

    @property
    def report_doc(self) -> dict:
        return load_json(self.out_dir / "report.json")


def run_from_config(cfg_path: Path, out_dir: Path, **overrides) -> CompletedRun:
    doc = load_json(cfg_path)
    doc["output_dir"] = str(out_dir)
    doc.update(overrides)
    base = cfg_path.parent
    for key in ("mesh_path", "front_image_path", "answers_path"):
        doc[key] = str((base / doc[key]).resolve())
    cfg = pipeline.RunConfig(**doc)
    start = time.perf_counter()
    report = pipeline.run(cfg)
    seconds = time.perf_counter() - start
    return CompletedRun(config=cfg, report=report, out_dir=out_dir, seconds=seconds)


@pytest.fixture(scope="session")
def small_fixture_dir(tmp_path_factory) -> Path:
    """Scaled-down fixture set for fast module-level pipeline tests."""
    d = tmp_path_factory.mktemp("small_fixtures")
    fixtures.write_fixture_set(
        d, render_resolution=160, atlas_resolution=192, sphere_faces_target=384
    )
    return d


@pytest.fixture(scope="session")
def small_sphere_run(small_fixture_dir, tmp_path_factory) -> CompletedRun:
    """One completed small sphere run with all debug dumps."""
    out = tmp_path_factory.mktemp("small_sphere_out")
    return run_from_config(small_fixture_dir / "run_sphere.json", out)


@pytest.fixture(scope="session")
def full_fixture_dir(tmp_path_factory) -> Path:
    """The shipped full-scale fixture set (20k-face sphere, humanoid)."""
    d = tmp_path_factory.mktemp("full_fixtures")
    fixtures.write_fixture_set(d)
    return d


@pytest.fixture(scope="session")
def sphere_run(full_fixture_dir, tmp_path_factory) -> CompletedRun:
    out = tmp_path_factory.mktemp("sphere_out")
    return run_from_config(full_fixture_dir / "run_sphere.json", out)


@pytest.fixture(scope="session")
def sphere_rerun(full_fixture_dir, tmp_path_factory) -> CompletedRun:
    """Second sphere run, identical config, separate output directory."""
    out = tmp_path_factory.mktemp("sphere_out_again")
    return run_from_config(full_fixture_dir / "run_sphere.json", out)


@pytest.fixture(scope="session")
def humanoid_run(full_fixture_dir, tmp_path_factory) -> CompletedRun:
    out = tmp_path_factory.mktemp("humanoid_out")
    return run_from_config(full_fixture_dir / "run_humanoid.json", out)


def solid_image(width: int, height: int, rgba) -> InputImage:
    px = np.zeros((height, width, 4), dtype=np.uint8)
    px[:, :] = np.asarray(rgba, dtype=np.uint8)
    return InputImage(px)
