"""Progressive multi-view UV texturing for single-image human meshes.

Takes one front RGBA photo plus a reconstructed mesh and produces a
complete, seam-smoothed UV texture by walking a fixed set of ten
viewpoints: the photo is projected directly, every other view is filled
by a depth-conditioned image generator (mock or remote) and
back-projected into the shared atlas under a per-pixel keep/update/new
classification that never overwrites what the photo established.
"""

from ultraman.errors import (
    BackendError,
    ConfigError,
    MeshError,
    StageError,
    UltramanError,
)
from ultraman.meshcore import Mesh, load_mesh, save_mesh
from ultraman.images import InputImage, apply_matte, load_image, save_image
from ultraman.atlas import TextureAtlas, bake_vertex_colors, new_atlas
from ultraman.views import Viewpoint, ViewRole, default_view_set
from ultraman.pipeline import RunConfig, RunReport, run

__all__ = [
    "BackendError",
    "ConfigError",
    "InputImage",
    "Mesh",
    "MeshError",
    "RunConfig",
    "RunReport",
    "StageError",
    "TextureAtlas",
    "UltramanError",
    "ViewRole",
    "Viewpoint",
    "apply_matte",
    "bake_vertex_colors",
    "default_view_set",
    "load_image",
    "load_mesh",
    "new_atlas",
    "run",
    "save_image",
    "save_mesh",
]

__version__ = "0.1.0"
