"""Command line entry point: serve /v1/generate.

`--stub` serves the deterministic built-in generator. Without it the
service loads the diffusion stack from `--model-dir`, falling back to
the stub (with a warning) when weights or dependencies are missing.
"""

from __future__ import annotations

import argparse
import logging
import sys

from ultraman_service.app import Service, StubGenerator, build_server
from ultraman_service.inference import GenerationSettings

log = logging.getLogger("ultraman_service")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ultraman-service",
        description="Depth- and reference-conditioned image generation service.",
    )
    parser.add_argument(
        "--stub",
        action="store_true",
        help="serve the deterministic stub generator (no model weights)",
    )
    parser.add_argument("--port", type=int, default=8080)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument(
        "--model-dir", default=None, help="directory holding the diffusion weights"
    )
    parser.add_argument("--base-model", default=GenerationSettings.base_model)
    parser.add_argument(
        "--guidance-scale", type=float, default=GenerationSettings.guidance_scale
    )
    parser.add_argument(
        "--controlnet-scale", type=float, default=GenerationSettings.controlnet_scale
    )
    parser.add_argument(
        "--ip-adapter-scale", type=float, default=GenerationSettings.ip_adapter_scale
    )
    parser.add_argument("--steps", type=int, default=GenerationSettings.steps)
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def make_service(args) -> tuple[Service, str]:
    """Build the service and report which mode it actually runs in."""
    if not args.stub:
        from ultraman_service.inference import DiffusionGenerator, ModelUnavailable

        settings = GenerationSettings(
            base_model=args.base_model,
            guidance_scale=args.guidance_scale,
            controlnet_scale=args.controlnet_scale,
            ip_adapter_scale=args.ip_adapter_scale,
            steps=args.steps,
        )
        try:
            if args.model_dir is None:
                raise ModelUnavailable("no --model-dir given")
            return Service(DiffusionGenerator(args.model_dir, settings)), "real"
        except ModelUnavailable as exc:
            log.warning("%s; falling back to stub mode", exc)
    return Service(StubGenerator()), "stub"


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    service, mode = make_service(args)
    server = build_server(service, host=args.host, port=args.port, mode=mode)
    host, port = server.server_address[:2]
    log.info("serving /v1/generate in %s mode on http://%s:%s", mode, host, port)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        log.info("shutting down")
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
