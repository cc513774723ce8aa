"""End-to-end pipeline tests on a scaled-down fixture set.

The session-scoped `small_sphere_run` (160 px renders, 192 px atlas)
provides one completed run; variant runs (resume, backend smoothing,
abort) execute here at the same small scale.
"""

from __future__ import annotations

import dataclasses
import json
import shutil

import numpy as np
import pytest
from conftest import load_json, run_from_config

from ultraman import pipeline
from ultraman.atlas import load_atlas
from ultraman.errors import ConfigError, StageError
from ultraman.genmask import KEEP, UPDATE
from ultraman.pipeline import GENERATION_ORDER, RunConfig, RunReport
from ultraman.render import TexelVisMap


def config_kwargs(**overrides):
    kw = dict(
        mesh_path="mesh.obj",
        front_image_path="front.png",
        answers_path="answers.json",
        output_dir="out",
    )
    kw.update(overrides)
    return kw


def make_config(**overrides) -> RunConfig:
    return RunConfig(**config_kwargs(**overrides))


class TestRunConfig:
    def test_from_json_resolves_relative_paths(self, small_fixture_dir):
        cfg = RunConfig.from_json(small_fixture_dir / "run_sphere.json")
        assert cfg.mesh_path == str(small_fixture_dir / "sphere.obj")
        assert cfg.front_image_path == str(small_fixture_dir / "sphere_front.png")
        assert cfg.answers_path == str(small_fixture_dir / "answers.json")
        assert cfg.render_resolution == 160
        assert cfg.atlas_resolution == 192
        assert cfg.backend == "mock"

    def test_defaults(self):
        cfg = make_config()
        assert cfg.atlas_resolution == 1024
        assert cfg.render_resolution == 768
        assert cfg.update_margin == 0.1
        assert cfg.dilation_px == 4
        assert cfg.seam_rule == "content"
        assert cfg.generation_order == GENERATION_ORDER
        cfg.validate()

    @pytest.mark.parametrize(
        "overrides,message",
        [
            ({"atlas_resolution": 0}, "resolutions"),
            ({"render_resolution": -5}, "resolutions"),
            ({"target_faces": 0}, "target_faces"),
            ({"update_margin": 1.0}, "update_margin"),
            ({"update_margin": -0.1}, "update_margin"),
            ({"dilation_px": -1}, "dilation_px"),
            ({"seam_rule": "blur"}, "seam_rule"),
            ({"backend": "cloud"}, "backend"),
            ({"fov_deg": 0.0}, "fov_deg"),
            ({"fov_deg": 180.0}, "fov_deg"),
            ({"distance": -2.0}, "distance"),
            ({"generation_order": (0, 2, 3)}, "permutation"),
            ({"generation_order": (1, 0, 2, 3, 4, 5, 6, 7, 8)}, "permutation"),
            ({"view_overrides": ({"azimuth_deg": 10.0},)}, "index"),
            ({"view_overrides": ({"index": 3, "tilt": 1.0},)}, "unknown keys"),
            ({"view_overrides": ({"index": 10},)}, "0..9"),
        ],
    )
    def test_validate_rejects(self, overrides, message):
        with pytest.raises(ConfigError, match=message):
            make_config(**overrides).validate()

    def test_generation_order_any_permutation_accepted(self):
        make_config(generation_order=(9, 8, 7, 6, 5, 4, 3, 2, 0)).validate()

    def test_from_json_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({**config_kwargs(), "texel_budget": 5}))
        with pytest.raises(ConfigError, match="unknown config keys"):
            RunConfig.from_json(path)

    def test_from_json_missing_key_rejected(self, tmp_path):
        doc = config_kwargs()
        del doc["front_image_path"]
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(ConfigError, match="missing config keys"):
            RunConfig.from_json(path)

    def test_from_json_non_object_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps([1, 2]))
        with pytest.raises(ConfigError, match="JSON object"):
            RunConfig.from_json(path)

    def test_from_json_invalid_json_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{broken")
        with pytest.raises(ConfigError, match="not valid JSON"):
            RunConfig.from_json(path)

    def test_from_json_missing_file_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            RunConfig.from_json(tmp_path / "absent.json")

    def test_to_dict_round_trips_sequences_as_lists(self):
        cfg = make_config(view_overrides=({"index": 2, "azimuth_deg": 50.0},))
        doc = cfg.to_dict()
        assert doc["generation_order"] == list(GENERATION_ORDER)
        assert doc["view_overrides"] == [{"index": 2, "azimuth_deg": 50.0}]


class TestRunReportSerialization:
    def test_to_dict_rounds_seconds(self):
        rep = RunReport(config={"a": 1}, total_seconds=1.23456789)
        doc = rep.to_dict()
        assert doc["total_seconds"] == 1.235
        assert doc["resumed_from"] is None
        assert doc["steps"] == [] and doc["warnings"] == []


class TestCompletedSmallRun:
    def test_schedule_front_first_then_generation_order(self, small_sphere_run):
        steps = small_sphere_run.report.steps
        assert [s["view_index"] for s in steps] == [1, 0, 2, 3, 4, 5, 6, 7, 8, 9]
        assert steps[0]["stage"] == "front_projection"
        assert all(s["stage"] == "generated_view" for s in steps[1:])

    def test_coverage_monotone_and_final_matches(self, small_sphere_run):
        rep = small_sphere_run.report
        curve = [s["coverage_after"] for s in rep.steps]
        assert all(b >= a for a, b in zip(curve, curve[1:]))
        assert rep.final_coverage == curve[-1]
        assert 0.0 < rep.final_coverage <= 1.0

    def test_textured_texels_monotone(self, small_sphere_run):
        counts = [s["textured_texels"] for s in small_sphere_run.report.steps]
        assert all(b >= a for a, b in zip(counts, counts[1:]))

    def test_label_counts_partition_every_generated_view(self, small_sphere_run):
        res = small_sphere_run.config.render_resolution
        for step in small_sphere_run.report.steps[1:]:
            counts = step["label_counts"]
            assert sorted(counts) == [
                "always_keep",
                "ignore",
                "keep",
                "new",
                "update",
            ]
            assert sum(counts.values()) == res * res

    def test_no_protected_pixel_violations(self, small_sphere_run):
        for step in small_sphere_run.report.steps[1:]:
            assert step["always_keep_violations"] == 0

    def test_band_energy_never_increases(self, small_sphere_run):
        seen = 0
        for step in small_sphere_run.report.steps[1:]:
            if "band_energy_before" in step:
                seen += 1
                assert step["band_energy_after"] <= step["band_energy_before"]
        assert seen > 0, "no view produced a seam band"

    def test_back_view_runs_before_back_dependent_views(self, small_sphere_run):
        order = [s["view_index"] for s in small_sphere_run.report.steps[1:]]
        assert order.index(0) < min(order.index(i) for i in (6, 7, 8, 9))

    def test_generated_views_record_provenance(self, small_sphere_run):
        for step in small_sphere_run.report.steps[1:]:
            assert step["model_id"] == "mock-shaded-v1"
            assert len(step["request_hash"]) == 64

    def test_output_files_complete(self, small_sphere_run):
        out = small_sphere_run.out_dir
        for name in (
            "texture.png",
            "mesh.obj",
            "report.json",
            "report.csv",
            "coverage.png",
            "views.json",
        ):
            assert (out / name).is_file(), name
        for i in range(10):
            assert (out / f"atlas_after_{i}.png").is_file()
            assert (out / f"atlas_meta_{i}.json").is_file()
            assert (out / f"depth_{i}.png").is_file()
            assert (out / f"cond_depth_{i}.png").is_file()
            assert (out / f"similarity_{i}.png").is_file()
            assert (out / f"render_{i}.png").is_file()
        for i in GENERATION_ORDER:
            assert (out / f"gen_{i}.png").is_file()
            assert (out / f"mask_{i}.png").is_file()
            assert (out / f"seam_band_{i}.png").is_file()

    def test_final_texture_equals_last_checkpoint(self, small_sphere_run):
        out = small_sphere_run.out_dir
        last = small_sphere_run.config.generation_order[-1]
        assert (out / "texture.png").read_bytes() == (
            out / f"atlas_after_{last}.png"
        ).read_bytes()

    def test_protected_texels_survive_to_the_end(self, small_sphere_run):
        out = small_sphere_run.out_dir
        after_front = load_atlas(out / "atlas_after_1.png", out / "atlas_meta_1.json")
        last = small_sphere_run.config.generation_order[-1]
        final = load_atlas(
            out / f"atlas_after_{last}.png", out / f"atlas_meta_{last}.json"
        )
        prot = after_front.protected
        assert prot.any()
        assert (final.protected == prot).all()
        assert (final.color[prot] == after_front.color[prot]).all()

    def test_report_json_echoes_config_and_summary(self, small_sphere_run):
        doc = small_sphere_run.report_doc
        rep = small_sphere_run.report
        assert doc["config"] == rep.config
        assert doc["final_coverage"] == rep.final_coverage
        assert doc["covered_texels"] == rep.covered_texels
        assert doc["mesh_faces_in"] == rep.mesh_faces_in
        assert doc["mesh_faces_used"] == rep.mesh_faces_used
        assert len(doc["steps"]) == 10

    def test_mesh_not_simplified_below_target(self, small_sphere_run):
        rep = small_sphere_run.report
        assert 0 < rep.mesh_faces_used <= rep.mesh_faces_in


class TestResume:
    def resume_config(self, small_sphere_run, out_dir):
        return dataclasses.replace(
            small_sphere_run.config, output_dir=str(out_dir)
        )

    def test_resume_reproduces_final_texture_bytes(
        self, small_sphere_run, tmp_path
    ):
        src = small_sphere_run.out_dir
        dst = tmp_path / "resumed"
        dst.mkdir()
        for name in ("atlas_after_4.png", "atlas_meta_4.json", "gen_0.png"):
            shutil.copy2(src / name, dst / name)
        cfg = self.resume_config(small_sphere_run, dst)
        rep = pipeline.run(cfg, resume_from=5)
        assert rep.resumed_from == 5
        assert [s["view_index"] for s in rep.steps] == [5, 6, 7, 8, 9]
        assert (dst / "texture.png").read_bytes() == (
            src / "texture.png"
        ).read_bytes()
        assert (dst / "mesh.obj").read_bytes() == (src / "mesh.obj").read_bytes()

    def test_resume_from_non_generated_view_rejected(
        self, small_sphere_run, tmp_path
    ):
        cfg = self.resume_config(small_sphere_run, tmp_path / "r1")
        with pytest.raises(ConfigError, match="generated view index"):
            pipeline.run(cfg, resume_from=1)

    def test_resume_without_checkpoint_rejected(self, small_sphere_run, tmp_path):
        cfg = self.resume_config(small_sphere_run, tmp_path / "r2")
        with pytest.raises(ConfigError, match="cannot resume"):
            pipeline.run(cfg, resume_from=5)

    def test_resume_past_back_view_needs_its_image(
        self, small_sphere_run, tmp_path
    ):
        src = small_sphere_run.out_dir
        dst = tmp_path / "r3"
        dst.mkdir()
        for name in ("atlas_after_4.png", "atlas_meta_4.json"):
            shutil.copy2(src / name, dst / name)
        cfg = self.resume_config(small_sphere_run, dst)
        with pytest.raises(ConfigError, match="gen_0.png"):
            pipeline.run(cfg, resume_from=5)


class TestOrderingGuard:
    def test_back_dependent_view_before_back_aborts(
        self, small_fixture_dir, tmp_path
    ):
        # Top view scheduled before the 180-degree view: the reference
        # router must refuse, and the run dies in that view's generate
        # stage.
        doc = load_json(small_fixture_dir / "run_sphere.json")
        doc["output_dir"] = str(tmp_path / "abort_out")
        doc["generation_order"] = [8, 0, 2, 3, 4, 5, 6, 7, 9]
        for key in ("mesh_path", "front_image_path", "answers_path"):
            doc[key] = str((small_fixture_dir / doc[key]).resolve())
        cfg = RunConfig(**doc)
        with pytest.raises(StageError, match="back reference|has not run") as info:
            pipeline.run(cfg)
        assert info.value.stage == "generate"
        assert info.value.view_index == 8


class TestVariants:
    def test_backend_smoothing_with_no_debug_dumps(
        self, small_fixture_dir, tmp_path
    ):
        out = tmp_path / "smooth_out"
        run = run_from_config(
            small_fixture_dir / "run_sphere.json",
            out,
            smooth_with_backend=True,
            debug_dumps=False,
        )
        assert (out / "texture.png").is_file()
        assert (out / "report.json").is_file()
        assert not list(out.glob("depth_*.png"))
        assert not list(out.glob("mask_*.png"))
        assert not list(out.glob("render_*.png"))
        energies = [
            s for s in run.report.steps[1:] if "band_energy_before" in s
        ]
        assert energies, "no seam bands were smoothed"
        curve = [s["coverage_after"] for s in run.report.steps]
        assert all(b >= a for a, b in zip(curve, curve[1:]))

    def test_remote_backend_without_url_is_a_config_error(
        self, small_fixture_dir, tmp_path, monkeypatch
    ):
        monkeypatch.delenv("ULTRAMAN_BACKEND_URL", raising=False)
        doc = load_json(small_fixture_dir / "run_sphere.json")
        doc["output_dir"] = str(tmp_path / "remote_out")
        doc["backend"] = "remote"
        for key in ("mesh_path", "front_image_path", "answers_path"):
            doc[key] = str((small_fixture_dir / doc[key]).resolve())
        with pytest.raises(ConfigError, match="backend_url"):
            pipeline.run(RunConfig(**doc))


class TestProtectedViolationCounter:
    def make_vis(self, entries):
        arr = np.asarray(entries, dtype=np.float64).reshape(-1, 5)
        return TexelVisMap(
            tex_row=arr[:, 0].astype(np.int32),
            tex_col=arr[:, 1].astype(np.int32),
            pix_row=arr[:, 2].astype(np.int32),
            pix_col=arr[:, 3].astype(np.int32),
            similarity=arr[:, 4],
            depth=np.full(arr.shape[0], 2.0),
            image_size=(3, 3),
            atlas_resolution=8,
        )

    def make_atlas(self):
        from ultraman.atlas import new_atlas

        atlas = new_atlas(8)
        atlas.status[0, 0] = 1
        atlas.color[0, 0] = (9, 9, 9, 255)
        atlas.protected[0, 0] = True
        return atlas

    def test_counts_protected_pixels_marked_writable(self):
        vis = self.make_vis([(0, 0, 1, 1, 0.5)])
        labels = np.zeros((3, 3), dtype=np.uint8)
        labels[1, 1] = UPDATE
        assert pipeline._protected_pixel_violations(labels, self.make_atlas(), vis) == 1

    def test_zero_when_labeled_keep(self):
        vis = self.make_vis([(0, 0, 1, 1, 0.5)])
        labels = np.zeros((3, 3), dtype=np.uint8)
        labels[1, 1] = KEEP
        assert pipeline._protected_pixel_violations(labels, self.make_atlas(), vis) == 0

    def test_zero_for_empty_visibility(self):
        vis = self.make_vis(np.empty((0, 5)))
        labels = np.zeros((3, 3), dtype=np.uint8)
        assert pipeline._protected_pixel_violations(labels, self.make_atlas(), vis) == 0
