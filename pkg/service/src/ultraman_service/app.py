"""Request handling and the HTTP server around it.

The core is `Service.handle(raw) -> (status, body)`: a pure function
from request bytes to an HTTP status and JSON body, independent of any
socket. The HTTP layer is a thin threaded wrapper that feeds POST
bodies through it, which keeps the whole protocol surface testable
in-process.
"""

from __future__ import annotations

import json
import logging
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Protocol

import numpy as np

from ultraman_service import stub
from ultraman_service.protocol import (
    GenerateRequest,
    RequestRejected,
    error_body,
    ok_body,
    parse_request,
)

log = logging.getLogger("ultraman_service")

MAX_BODY_BYTES = 64 * 1024 * 1024


class Generator(Protocol):
    model_id: str

    def generate(self, request: GenerateRequest) -> np.ndarray: ...


class StubGenerator:
    """The deterministic built-in generator behind the Generator shape."""

    model_id = stub.MODEL_ID

    def generate(self, request: GenerateRequest) -> np.ndarray:
        return stub.generate(request)


class Service:
    def __init__(self, generator: Generator):
        self.generator = generator

    def handle(self, raw: bytes) -> tuple[int, bytes]:
        """Answer one /v1/generate request; never raises."""
        try:
            request = parse_request(raw)
        except RequestRejected as exc:
            return exc.status, error_body(exc.reason)

        try:
            image = self.generator.generate(request)
        except Exception as exc:  # noqa: BLE001 - wire boundary
            log.exception("generation failed")
            return 500, error_body(f"generation failed: {exc}")

        if image.shape[:2] != (request.height, request.width):
            return 500, error_body(
                "generator produced "
                f"{image.shape[1]}x{image.shape[0]} for a "
                f"{request.width}x{request.height} request"
            )
        return 200, ok_body(image, self.generator.model_id)


def _make_handler(service: Service, mode: str):
    class Handler(BaseHTTPRequestHandler):
        def _send(self, status: int, body: bytes) -> None:
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_POST(self) -> None:  # noqa: N802 - http.server API
            if self.path != "/v1/generate":
                self._send(404, error_body(f"no such endpoint: {self.path}"))
                return
            length = int(self.headers.get("Content-Length", 0))
            if length > MAX_BODY_BYTES:
                self._send(400, error_body("request body too large"))
                return
            raw = self.rfile.read(length)
            status, body = service.handle(raw)
            self._send(status, body)

        def do_GET(self) -> None:  # noqa: N802 - http.server API
            if self.path == "/healthz":
                doc = {"status": "ok", "mode": mode, "model_id": service.generator.model_id}
                self._send(200, json.dumps(doc).encode("utf-8"))
            else:
                self._send(404, error_body(f"no such endpoint: {self.path}"))

        def log_message(self, fmt: str, *args) -> None:
            log.info("%s %s", self.address_string(), fmt % args)

    return Handler


def build_server(
    service: Service, host: str = "127.0.0.1", port: int = 8080, mode: str = "stub"
) -> ThreadingHTTPServer:
    """A threaded HTTP server; the caller owns serve_forever/shutdown."""
    return ThreadingHTTPServer((host, port), _make_handler(service, mode))


MakeService = Callable[[], Service]
