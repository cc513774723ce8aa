"""Command line front end.

    ultraman run --config run.json [--resume-from N] [--backend ...]
    ultraman prompts questions
    ultraman eval --mesh out/mesh.obj --atlas out/texture.png \
        --refs refs/ --out eval/report.csv

Exit codes: 0 on success, 2 for configuration or input problems,
3 when a pipeline stage fails.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from ultraman.errors import ConfigError, StageError, UltramanError

log = logging.getLogger("ultraman.cli")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ultraman",
        description="Progressive UV texturing from a single front photo.",
    )
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="debug-level logging"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="texture a mesh from a front photo")
    p_run.add_argument("--config", required=True, help="run config JSON")
    p_run.add_argument(
        "--resume-from",
        type=int,
        default=None,
        metavar="N",
        help="restart at generated view N using its predecessor's checkpoint",
    )
    p_run.add_argument(
        "--backend",
        choices=("mock", "remote"),
        default=None,
        help="override the config's backend choice",
    )
    p_run.add_argument(
        "--backend-url", default=None, help="override the remote backend URL"
    )
    p_run.add_argument(
        "--output-dir", default=None, help="override the config's output dir"
    )

    p_prompts = sub.add_parser("prompts", help="prompt tooling")
    prompts_sub = p_prompts.add_subparsers(dest="prompts_command", required=True)
    prompts_sub.add_parser(
        "questions", help="print the canonical appearance questions"
    )

    p_eval = sub.add_parser(
        "eval", help="score a textured mesh against reference images"
    )
    p_eval.add_argument("--mesh", required=True, help="textured OBJ")
    p_eval.add_argument("--atlas", required=True, help="texture PNG")
    p_eval.add_argument(
        "--refs",
        required=True,
        help="directory with front.png back.png left.png right.png",
    )
    p_eval.add_argument("--out", required=True, help="CSV report path")
    p_eval.add_argument("--resolution", type=int, default=768)
    p_eval.add_argument(
        "--distance", type=float, default=None, help="camera distance override"
    )
    return parser


def _cmd_run(args) -> int:
    from ultraman import pipeline

    cfg = pipeline.RunConfig.from_json(args.config)
    updates = {}
    if args.backend:
        updates["backend"] = args.backend
    if args.backend_url:
        updates["backend_url"] = args.backend_url
    if args.output_dir:
        updates["output_dir"] = str(Path(args.output_dir).resolve())
    if updates:
        cfg = dataclasses.replace(cfg, **updates)
        cfg.validate()
    rep = pipeline.run(cfg, resume_from=args.resume_from)
    print(
        f"done: coverage {rep.final_coverage:.3f} "
        f"({rep.covered_texels} covered texels) in {rep.total_seconds:.1f}s"
    )
    print(f"outputs in {cfg.output_dir}")
    return EXIT_OK


def _cmd_prompts(args) -> int:
    from ultraman.prompts import questions_text

    print(questions_text())
    return EXIT_OK


def _cmd_eval(args) -> int:
    from ultraman import metrics, report as report_mod
    from ultraman.atlas import TextureAtlas
    from ultraman.images import load_image
    from ultraman.meshcore import load_mesh

    import numpy as np

    mesh = load_mesh(args.mesh)
    if mesh.uvs is None:
        raise ConfigError(f"mesh {args.mesh} has no UVs; nothing to evaluate")
    from ultraman.meshcore import compute_normals

    if mesh.normals is None:
        mesh = compute_normals(mesh)

    tex = load_image(args.atlas)
    if tex.height != tex.width:
        raise ConfigError("texture atlas must be square")
    textured = tex.pixels[:, :, 3] >= 128
    atlas = TextureAtlas(
        color=tex.pixels.copy(),
        status=textured.astype(np.uint8),
        protected=np.zeros_like(textured),
        best_similarity=np.zeros(textured.shape, dtype=np.float32),
        source_view=np.full(textured.shape, -1, dtype=np.int8),
    )

    refs_dir = Path(args.refs)
    references = {}
    for name in metrics.EVAL_VIEW_AZIMUTHS:
        path = refs_dir / f"{name}.png"
        if not path.exists():
            raise ConfigError(f"missing reference image: {path}")
        references[name] = load_image(path)

    rows = metrics.eval_views(
        mesh,
        atlas,
        references,
        render_resolution=args.resolution,
        distance=args.distance,
    )
    out_csv = Path(args.out)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    json_path = metrics.write_eval_reports(rows, out_csv)
    records = [row.to_record() for row in rows]
    report_mod.eval_figure(records, out_csv.with_name("metrics.png"))

    header = f"{'view':<8}{'psnr':>12}{'ssim':>10}{'pixels':>10}"
    print(header)
    for rec in records:
        print(
            f"{rec['view']:<8}{str(rec['psnr']):>12}"
            f"{rec['ssim']:>10.4f}{rec['foreground_pixels']:>10}"
        )
    print(f"reports: {out_csv}, {json_path}, {out_csv.with_name('metrics.png')}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handlers = {
        "run": _cmd_run,
        "prompts": _cmd_prompts,
        "eval": _cmd_eval,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except StageError as exc:
        log.error("stage failed: %s", exc)
        return EXIT_STAGE
    except UltramanError as exc:
        log.error("%s", exc)
        return EXIT_STAGE


if __name__ == "__main__":
    raise SystemExit(main())
