"""Exception types shared across the package."""

from __future__ import annotations


class UltramanError(Exception):
    """Base class for every error raised by this package."""


class MeshError(UltramanError):
    """Mesh could not be parsed or violates a structural invariant."""


class ConfigError(UltramanError):
    """Run configuration is missing, malformed, or inconsistent."""


class BackendError(UltramanError):
    """Generation backend failed or returned an unusable response."""


class StageError(UltramanError):
    """A pipeline stage failed; carries which stage and which view."""

    def __init__(self, stage: str, view_index: int | None, cause: Exception):
        self.stage = stage
        self.view_index = view_index
        self.cause = cause
        where = stage if view_index is None else f"{stage} (view {view_index})"
        super().__init__(f"{where}: {cause}")
