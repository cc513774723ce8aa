"""End-to-end run: photo + mesh in, textured mesh and reports out.

The run walks a fixed ten-view schedule. The photo view seeds and
protects the atlas; the 180-degree view is generated first so its
output can condition the remaining rear and vertical views; every
generated view goes through render -> classify -> generate -> project
-> seam smoothing. Each view leaves an atlas checkpoint on disk, and
`resume_from` restarts the schedule at any generated view from those
checkpoints.
"""

from __future__ import annotations

import json
import logging
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from ultraman import genmask, report as report_mod, seams, views as views_mod
from ultraman.atlas import (
    TextureAtlas,
    bake_vertex_colors,
    load_atlas,
    new_atlas,
    save_atlas_meta,
    save_texture_png,
)
from ultraman.errors import BackendError, ConfigError, StageError, UltramanError
from ultraman.genbackend import (
    GenRequest,
    MockBackend,
    RemoteBackend,
    select_reference,
)
from ultraman.images import InputImage, apply_matte, load_image, save_image
from ultraman.meshcore import (
    Mesh,
    bounding_center_radius,
    bounds,
    compute_normals,
    load_mesh,
    save_mesh,
)
from ultraman.prompts import compose, load_answers
from ultraman.render import (
    atlas_surface_geometry,
    export_conditioning_depth,
    export_depth16,
    rasterize_view,
    render_color,
    render_depth,
    render_similarity,
    texel_visibility,
)
from ultraman.project import project_front, project_view
from ultraman.simplify import simplify
from ultraman.unwrap import unwrap_triangle_grid

log = logging.getLogger("ultraman.pipeline")

FRONT_VIEW_INDEX = 1
GENERATION_ORDER = (0, 2, 3, 4, 5, 6, 7, 8, 9)

_CONFIG_REQUIRED = ("mesh_path", "front_image_path", "answers_path", "output_dir")


@dataclass
class RunConfig:
    """Everything a run needs; loads from a flat JSON document."""

    mesh_path: str
    front_image_path: str
    answers_path: str
    output_dir: str
    front_mask_path: str | None = None
    atlas_resolution: int = 1024
    render_resolution: int = 768
    target_faces: int = 40000
    update_margin: float = 0.1
    dilation_px: int = 4
    seam_rule: str = "content"
    smooth_with_backend: bool = False
    backend: str = "mock"
    backend_url: str | None = None
    global_seed: int = 0
    fov_deg: float = 45.0
    distance: float | None = None
    bilinear_sampling: bool = False
    debug_dumps: bool = True
    generation_order: tuple[int, ...] = GENERATION_ORDER
    view_overrides: tuple[dict, ...] = ()

    def validate(self) -> None:
        if self.atlas_resolution <= 0 or self.render_resolution <= 0:
            raise ConfigError("resolutions must be positive integers")
        if self.target_faces < 1:
            raise ConfigError("target_faces must be at least 1")
        if not 0.0 <= self.update_margin < 1.0:
            raise ConfigError("update_margin must lie in [0, 1)")
        if self.dilation_px < 0:
            raise ConfigError("dilation_px cannot be negative")
        if self.seam_rule not in ("content", "index"):
            raise ConfigError(f"unknown seam_rule '{self.seam_rule}'")
        if self.backend not in ("mock", "remote"):
            raise ConfigError(f"unknown backend '{self.backend}'")
        if not 0.0 < self.fov_deg < 180.0:
            raise ConfigError("fov_deg must lie in (0, 180)")
        if self.distance is not None and self.distance <= 0.0:
            raise ConfigError("distance must be positive")
        order = tuple(self.generation_order)
        if sorted(order) != sorted(GENERATION_ORDER):
            raise ConfigError(
                "generation_order must be a permutation of "
                f"{sorted(GENERATION_ORDER)}"
            )
        for ov in self.view_overrides:
            if "index" not in ov:
                raise ConfigError("view override is missing 'index'")
            allowed = {"index", "azimuth_deg", "elevation_deg", "distance", "fov_deg"}
            unknown = set(ov) - allowed
            if unknown:
                raise ConfigError(
                    f"view override has unknown keys: {sorted(unknown)}"
                )
            if not 0 <= int(ov["index"]) <= 9:
                raise ConfigError("view override index outside 0..9")

    @classmethod
    def from_json(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = [k for k in _CONFIG_REQUIRED if k not in doc]
        if missing:
            raise ConfigError(f"missing config keys: {missing}")
        if "generation_order" in doc:
            doc["generation_order"] = tuple(doc["generation_order"])
        if "view_overrides" in doc:
            doc["view_overrides"] = tuple(doc["view_overrides"])
        # Relative paths resolve against the config file's directory.
        base = path.parent
        for key in (
            "mesh_path",
            "front_image_path",
            "answers_path",
            "output_dir",
            "front_mask_path",
        ):
            if doc.get(key):
                doc[key] = str((base / doc[key]).resolve())
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["generation_order"] = list(self.generation_order)
        doc["view_overrides"] = [dict(ov) for ov in self.view_overrides]
        return doc


@dataclass
class RunReport:
    """Per-view records plus run summary; serialized by the report module."""

    config: dict
    steps: list[dict] = field(default_factory=list)
    mesh_faces_in: int = 0
    mesh_faces_used: int = 0
    covered_texels: int = 0
    final_coverage: float = 0.0
    total_seconds: float = 0.0
    resumed_from: int | None = None
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "mesh_faces_in": self.mesh_faces_in,
            "mesh_faces_used": self.mesh_faces_used,
            "covered_texels": self.covered_texels,
            "final_coverage": self.final_coverage,
            "total_seconds": round(self.total_seconds, 3),
            "resumed_from": self.resumed_from,
            "warnings": self.warnings,
            "steps": self.steps,
        }


@contextmanager
def _stage(name: str, view_index: int | None = None):
    try:
        yield
    except (ConfigError, StageError):
        # Configuration problems keep their identity (and exit code)
        # no matter which stage surfaced them.
        raise
    except Exception as exc:
        raise StageError(name, view_index, exc) from exc


def _make_backend(cfg: RunConfig):
    if cfg.backend == "mock":
        return MockBackend()
    import os

    url = cfg.backend_url or os.environ.get("ULTRAMAN_BACKEND_URL")
    if not url:
        raise ConfigError(
            "remote backend needs backend_url or ULTRAMAN_BACKEND_URL"
        )
    return RemoteBackend(url)


def _build_views(cfg: RunConfig, distance: float) -> list[views_mod.Viewpoint]:
    views = views_mod.default_view_set(distance, cfg.fov_deg)
    for ov in cfg.view_overrides:
        i = int(ov["index"])
        views[i] = replace(
            views[i],
            azimuth_deg=float(ov.get("azimuth_deg", views[i].azimuth_deg)),
            elevation_deg=float(ov.get("elevation_deg", views[i].elevation_deg)),
            distance=float(ov.get("distance", views[i].distance)),
            fov_deg=float(ov.get("fov_deg", views[i].fov_deg)),
        )
    return views


def _prepare_mesh(cfg: RunConfig, rep: RunReport) -> Mesh:
    mesh = load_mesh(cfg.mesh_path)
    rep.mesh_faces_in = mesh.num_faces
    if mesh.num_faces > cfg.target_faces:
        log.info(
            "simplifying mesh %d -> %d faces", mesh.num_faces, cfg.target_faces
        )
        mesh = simplify(mesh, cfg.target_faces)
    # Normals are computed on the welded mesh so they stay smooth; the
    # unwrap below carries them onto its split vertices.
    mesh = compute_normals(mesh)
    if mesh.uvs is None:
        log.info("mesh has no UVs; unwrapping %d faces", mesh.num_faces)
        mesh = unwrap_triangle_grid(mesh)
    rep.mesh_faces_used = mesh.num_faces
    rep.warnings.extend(mesh.warnings)
    return mesh


def _protected_pixel_violations(
    labels: np.ndarray, atlas: TextureAtlas, vis
) -> int:
    """Pixels labeled NEW or UPDATE that still contain a protected texel.

    Zero by construction of the per-pixel precedence; reported so runs
    can prove it.
    """
    if len(vis) == 0:
        return 0
    height, width = labels.shape
    prot = np.zeros((height, width), dtype=bool)
    hit = atlas.protected[vis.tex_row, vis.tex_col]
    prot[vis.pix_row[hit], vis.pix_col[hit]] = True
    writable = (labels == genmask.NEW) | (labels == genmask.UPDATE)
    return int((prot & writable).sum())


def run(cfg: RunConfig, resume_from: int | None = None) -> RunReport:
    """Execute the texturing schedule; returns the run report.

    With `resume_from` set to a generated view's canonical index, the
    atlas checkpoint of the preceding step is loaded from the output
    directory and the schedule restarts there.
    """
    t_start = time.perf_counter()
    cfg.validate()
    rep = RunReport(config=cfg.to_dict())
    rep.resumed_from = resume_from
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    order = [FRONT_VIEW_INDEX] + [int(i) for i in cfg.generation_order]
    start_pos = 0
    if resume_from is not None:
        if resume_from not in order[1:]:
            raise ConfigError(
                f"resume_from must be a generated view index, one of {order[1:]}"
            )
        start_pos = order.index(resume_from)

    with _stage("load"):
        photo = load_image(cfg.front_image_path)
        matte = None
        if cfg.front_mask_path:
            matte = load_image(cfg.front_mask_path).pixels[:, :, 0] >= 128
        photo = apply_matte(photo, matte)
        bundle = load_answers(cfg.answers_path)

    with _stage("prepare"):
        mesh = _prepare_mesh(cfg, rep)
        had_colors = mesh.vertex_colors is not None
        mesh_bounds = bounds(mesh)
        _, radius = bounding_center_radius(mesh)
        distance = cfg.distance or views_mod.auto_distance(radius, cfg.fov_deg)
        views = _build_views(cfg, distance)
        views_mod.views_to_json(views, out / "views.json")
        geometry = atlas_surface_geometry(mesh, cfg.atlas_resolution)
        rep.covered_texels = int(geometry.covered.sum())
        backend = _make_backend(cfg)

    back_image: InputImage | None = None
    if start_pos == 0:
        atlas = bake_vertex_colors(mesh, cfg.atlas_resolution) if had_colors \
            else new_atlas(cfg.atlas_resolution)
    else:
        with _stage("resume"):
            prev = order[start_pos - 1]
            color_png = out / f"atlas_after_{prev}.png"
            meta_json = out / f"atlas_meta_{prev}.json"
            if not color_png.exists() or not meta_json.exists():
                raise ConfigError(
                    f"cannot resume: checkpoint for view {prev} not found in {out}"
                )
            atlas = load_atlas(color_png, meta_json)
            # Views past the back view need its generated image back.
            zero_pos = order.index(0)
            if zero_pos < start_pos:
                back_png = out / "gen_0.png"
                if not back_png.exists():
                    raise ConfigError(
                        "cannot resume past the back view: gen_0.png missing"
                    )
                back_image = load_image(back_png)

    def checkpoint(view_index: int) -> None:
        save_texture_png(atlas, out / f"atlas_after_{view_index}.png")
        save_atlas_meta(atlas, out / f"atlas_meta_{view_index}.json")

    def coverage() -> float:
        if rep.covered_texels == 0:
            return 0.0
        return atlas.textured_count / rep.covered_texels

    # ---- photo view: seed and protect -------------------------------
    if start_pos == 0:
        t0 = time.perf_counter()
        view = views[FRONT_VIEW_INDEX]
        with _stage("render", view.index):
            cams = views_mod.camera_mats(view, mesh_bounds, cfg.render_resolution)
            vr = rasterize_view(mesh, cams)
            depth = render_depth(mesh, cams, view=vr)
            sim = render_similarity(mesh, cams, view=vr)
            vis = texel_visibility(mesh, atlas, cams, depth, geometry, view=vr)
        with _stage("project_front", view.index):
            atlas = project_front(atlas, photo, vis, cfg.bilinear_sampling)
        with _stage("checkpoint", view.index):
            checkpoint(view.index)
            if cfg.debug_dumps:
                save_image(export_depth16(depth), out / f"depth_{view.index}.png")
                save_image(
                    export_conditioning_depth(depth),
                    out / f"cond_depth_{view.index}.png",
                )
                save_image(
                    np.rint(sim.values * 255.0).astype(np.uint8),
                    out / f"similarity_{view.index}.png",
                )
                shot = render_color(mesh, atlas, cams, view=vr)
                save_image(shot.pixels, out / f"render_{view.index}.png")
        rep.steps.append(
            {
                "stage": "front_projection",
                "view_index": view.index,
                "azimuth_deg": view.azimuth_deg,
                "elevation_deg": view.elevation_deg,
                "seconds": time.perf_counter() - t0,
                "coverage_after": coverage(),
                "textured_texels": atlas.textured_count,
                "protected_texels": int(atlas.protected.sum()),
            }
        )
        log.info(
            "front projection done: %.1f%% coverage",
            100.0 * rep.steps[-1]["coverage_after"],
        )

    # ---- generated views ---------------------------------------------
    for i in order[start_pos:]:
        if i == FRONT_VIEW_INDEX:
            continue
        t0 = time.perf_counter()
        view = views[i]
        step: dict = {
            "stage": "generated_view",
            "view_index": view.index,
            "azimuth_deg": view.azimuth_deg,
            "elevation_deg": view.elevation_deg,
        }

        with _stage("render", i):
            cams = views_mod.camera_mats(view, mesh_bounds, cfg.render_resolution)
            vr = rasterize_view(mesh, cams)
            depth = render_depth(mesh, cams, view=vr)
            sim = render_similarity(mesh, cams, view=vr)
            vis = texel_visibility(mesh, atlas, cams, depth, geometry, view=vr)

        with _stage("classify", i):
            labels = genmask.classify(vis, atlas, sim, cfg.update_margin)
            step["label_counts"] = genmask.label_counts(labels)
            step["always_keep_violations"] = _protected_pixel_violations(
                labels, atlas, vis
            )

        with _stage("generate", i):
            ref = select_reference(view, photo, back_image)
            req = GenRequest(
                mode="generate",
                reference=ref,
                depth=export_conditioning_depth(depth),
                prompt=compose(bundle, view),
                seed=cfg.global_seed ^ i,
                width=cfg.render_resolution,
                height=cfg.render_resolution,
                azimuth_deg=view.azimuth_deg,
                elevation_deg=view.elevation_deg,
            )
            gen = backend.generate(req)
            step["model_id"] = gen.model_id
            step["request_hash"] = gen.request_hash
            if i == 0:
                back_image = gen.image
            save_image(gen.image, out / f"gen_{i}.png")

        with _stage("project", i):
            atlas = project_view(
                atlas, gen.image, labels, vis, i, cfg.bilinear_sampling
            )

        with _stage("seams", i):
            a_lab, b_lab = seams.seam_pair_for_view(labels, cfg.seam_rule, i)
            edges_a = seams.canny_of_mask(labels, a_lab)
            edges_b = seams.canny_of_mask(labels, b_lab)
            band = seams.seam_band(edges_a, edges_b, cfg.dilation_px)
            band &= depth.foreground
            step["seam_band_pixels"] = int(band.sum())
            rendered = render_color(mesh, atlas, cams, view=vr)
            if band.any():
                step["band_energy_before"] = seams.band_energy(
                    rendered.pixels[:, :, :3], band
                )
                smoothed = None
                if cfg.smooth_with_backend:
                    try:
                        inp = GenRequest(
                            mode="inpaint",
                            reference=InputImage(rendered.pixels),
                            depth=export_conditioning_depth(depth),
                            prompt=compose(bundle, view),
                            seed=cfg.global_seed ^ i,
                            width=cfg.render_resolution,
                            height=cfg.render_resolution,
                            azimuth_deg=view.azimuth_deg,
                            elevation_deg=view.elevation_deg,
                            mask=band,
                        )
                        smoothed = backend.generate(inp).image.pixels
                    except BackendError as exc:
                        msg = f"view {i}: backend inpaint failed ({exc}); " \
                            "falling back to harmonic smoothing"
                        log.warning(msg)
                        rep.warnings.append(msg)
                if smoothed is None:
                    smoothed = seams.smooth_seams(rendered.pixels, band)
                step["band_energy_after"] = seams.band_energy(
                    smoothed[:, :, :3], band
                )
                band_labels = np.where(
                    band, genmask.UPDATE, genmask.IGNORE
                ).astype(np.uint8)
                atlas = project_view(
                    atlas,
                    InputImage(smoothed),
                    band_labels,
                    vis,
                    i,
                    cfg.bilinear_sampling,
                )

        with _stage("checkpoint", i):
            checkpoint(i)
            if cfg.debug_dumps:
                save_image(export_depth16(depth), out / f"depth_{i}.png")
                save_image(
                    export_conditioning_depth(depth), out / f"cond_depth_{i}.png"
                )
                save_image(
                    np.rint(sim.values * 255.0).astype(np.uint8),
                    out / f"similarity_{i}.png",
                )
                save_image(genmask.mask_to_rgb(labels), out / f"mask_{i}.png")
                save_image(
                    (band.astype(np.uint8) * 255), out / f"seam_band_{i}.png"
                )
                save_image(rendered.pixels, out / f"render_{i}.png")
                if band.any():
                    save_image(smoothed, out / f"render_smoothed_{i}.png")

        step["seconds"] = time.perf_counter() - t0
        step["coverage_after"] = coverage()
        step["textured_texels"] = atlas.textured_count
        rep.steps.append(step)
        log.info(
            "view %d (az %.0f el %.0f): %.1f%% coverage, labels %s",
            i,
            view.azimuth_deg,
            view.elevation_deg,
            100.0 * step["coverage_after"],
            step["label_counts"],
        )

    # ---- exports -------------------------------------------------------
    with _stage("export"):
        save_texture_png(atlas, out / "texture.png")
        save_mesh(mesh, out / "mesh.obj", texture_name="texture.png")
        rep.final_coverage = coverage()
        rep.total_seconds = time.perf_counter() - t_start
        report_mod.write_run_reports(rep.to_dict(), out)
    log.info(
        "run complete: %.1f%% final coverage in %.1fs",
        100.0 * rep.final_coverage,
        rep.total_seconds,
    )
    return rep
