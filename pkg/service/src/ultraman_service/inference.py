"""Diffusion-backed generation: depth ControlNet plus a reference
image adapter over a Stable Diffusion backbone.

The heavy dependencies load lazily so the service starts (and the stub
works) without them. One inference runs at a time; concurrent requests
queue first-in-first-out through a gate.

The conditioning weights below are service-side choices, exposed as
configuration because no single canonical set exists; the defaults are
conventional starting points for depth-guided, reference-conditioned
SD pipelines.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ultraman_service.fifo import FifoGate
from ultraman_service.protocol import GenerateRequest


@dataclass
class GenerationSettings:
    """Tunable conditioning weights with documented defaults."""

    base_model: str = "stabilityai/stable-diffusion-xl-base-1.0"
    controlnet_model: str = "diffusers/controlnet-depth-sdxl-1.0"
    ip_adapter_repo: str = "h94/IP-Adapter"
    ip_adapter_weights: str = "ip-adapter_sdxl.bin"
    guidance_scale: float = 5.0
    controlnet_scale: float = 0.8
    ip_adapter_scale: float = 0.6
    steps: int = 30
    device: str = "cuda"


class ModelUnavailable(Exception):
    """Raised when weights or the inference stack cannot be loaded."""


class DiffusionGenerator:
    """Loads the pipelines once and serves requests one at a time."""

    MODEL_ID_PREFIX = "sdxl-depth-ref"

    def __init__(self, model_dir: str | Path, settings: GenerationSettings | None = None):
        self.settings = settings or GenerationSettings()
        self.model_dir = Path(model_dir)
        self._gate = FifoGate()
        self._pipe = None

        if not self.model_dir.is_dir():
            raise ModelUnavailable(f"model directory {self.model_dir} does not exist")
        try:
            import torch  # noqa: F401
            from diffusers import (  # noqa: F401
                ControlNetModel,
                StableDiffusionXLControlNetImg2ImgPipeline,
            )
        except ImportError as exc:
            raise ModelUnavailable(
                "diffusion dependencies are not installed "
                "(pip install 'ultraman-service[real]')"
            ) from exc

    def _load(self):
        if self._pipe is not None:
            return self._pipe
        import torch
        from diffusers import ControlNetModel, StableDiffusionXLControlNetImg2ImgPipeline

        s = self.settings
        controlnet = ControlNetModel.from_pretrained(
            self.model_dir / s.controlnet_model, torch_dtype=torch.float16
        )
        pipe = StableDiffusionXLControlNetImg2ImgPipeline.from_pretrained(
            self.model_dir / s.base_model,
            controlnet=controlnet,
            torch_dtype=torch.float16,
        )
        pipe.load_ip_adapter(
            self.model_dir / s.ip_adapter_repo,
            subfolder="sdxl_models",
            weight_name=s.ip_adapter_weights,
        )
        pipe.set_ip_adapter_scale(s.ip_adapter_scale)
        pipe.to(s.device)
        self._pipe = pipe
        return pipe

    @property
    def model_id(self) -> str:
        return f"{self.MODEL_ID_PREFIX}:{self.settings.base_model}"

    def generate(self, request: GenerateRequest) -> np.ndarray:
        with self._gate.turn():
            return self._run(request)

    def _run(self, request: GenerateRequest) -> np.ndarray:
        import torch

        pipe = self._load()
        s = self.settings
        size = (request.width, request.height)
        depth_rgb = Image.fromarray(request.depth).convert("RGB").resize(size)
        reference = Image.fromarray(request.reference).convert("RGB").resize(size)

        kwargs = dict(
            prompt=request.prompt,
            image=reference,
            control_image=depth_rgb,
            ip_adapter_image=reference,
            num_inference_steps=s.steps,
            guidance_scale=s.guidance_scale,
            controlnet_conditioning_scale=s.controlnet_scale,
            generator=torch.Generator(device=s.device).manual_seed(request.seed),
            width=request.width,
            height=request.height,
        )
        if request.mode == "inpaint":
            kwargs["strength"] = 0.5
            # The mask limits the rewrite to the seam band.
            mask = Image.fromarray((request.mask * 255).astype(np.uint8))
            kwargs["mask_image"] = mask.resize(size)

        result = pipe(**kwargs).images[0].convert("RGBA")
        if result.size != size:
            result = result.resize(size)
        return np.asarray(result)
