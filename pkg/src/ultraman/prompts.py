"""Per-view text prompts assembled from structured appearance answers.

The captioning itself happens outside the pipeline: any VQA provider
(or a human) answers the fixed question set about the photo and stores
the result as JSON. Here those answers are composed with a per-view
location phrase into the final prompt.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ultraman.errors import ConfigError
from ultraman.views import Viewpoint

# Canonical question set, in composition order.
QUESTIONS: tuple[tuple[str, str], ...] = (
    ("clothing_style", "What style of clothing is the person wearing?"),
    ("clothing_colors", "What colors are the person's clothes?"),
    ("facial_features", "What are the person's notable facial features?"),
    ("hairstyle", "What hairstyle does the person have?"),
    ("accessories", "What accessories is the person wearing, if any?"),
    ("gender_age", "How would you describe the person's gender and age?"),
)

CANONICAL_IDS = tuple(qid for qid, _ in QUESTIONS)


@dataclass
class PromptBundle:
    """Validated answers plus any extra keys the file carried."""

    answers: dict[str, str] = field(default_factory=dict)

    def ordered_answers(self) -> list[str]:
        """Canonical answers first, extras after, in file order."""
        out = [self.answers[qid] for qid in CANONICAL_IDS]
        for key, value in self.answers.items():
            if key not in CANONICAL_IDS:
                out.append(value)
        return out


def load_answers(path: str | Path) -> PromptBundle:
    """Load and validate an answers file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"answers file not found: {path}")
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"answers file is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict) or not raw:
        raise ConfigError("answers file must be a non-empty JSON object")
    for qid in CANONICAL_IDS:
        if qid not in raw:
            raise ConfigError(f"answers file missing canonical key '{qid}'")
    answers = {str(k): str(v) for k, v in raw.items()}
    return PromptBundle(answers=answers)


def location_phrase(azimuth_deg: float, elevation_deg: float) -> str:
    if elevation_deg >= 90.0:
        return "viewed from directly above"
    if elevation_deg <= -90.0:
        return "viewed from directly below"
    az = azimuth_deg % 360.0
    if az == 0.0:
        return "front view"
    if az == 180.0:
        return "back view"
    if az in (45.0, 315.0):
        return "front side view"
    if az in (90.0, 270.0):
        return "side view"
    if az in (135.0, 225.0):
        return "back side view"
    # Off-grid azimuths (config overrides) fall back by quadrant.
    if az < 67.5 or az > 292.5:
        return "front side view"
    if az < 112.5 or az > 247.5:
        return "side view"
    return "back side view"


def compose(bundle: PromptBundle, view: Viewpoint) -> str:
    """Deterministic prompt: answers, location, framing boilerplate."""
    parts = [a.strip() for a in bundle.ordered_answers() if a.strip()]
    parts.append(location_phrase(view.azimuth_deg, view.elevation_deg))
    parts.append("full body")
    parts.append("plain background")
    prompt = ", ".join(parts)
    if not prompt:
        raise ConfigError("composed prompt is empty")
    return prompt


def questions_text() -> str:
    """The question set, one `id: question` line each (CLI output)."""
    return "\n".join(f"{qid}: {q}" for qid, q in QUESTIONS)
