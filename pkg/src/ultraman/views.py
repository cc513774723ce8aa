"""The fixed 10-viewpoint set and the pinhole camera used everywhere.

World frame: Z is up. The azimuth-0 camera sits on the -Y side of the
subject looking toward +Y, which is the orientation of the input
photograph. Azimuth rotates counter-clockwise about +Z (seen from
above); elevation +90 is straight overhead.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from ultraman.errors import ConfigError

# Horizontal ring azimuths in generation-relevant order: the back view
# first (it anchors every rear reference), then the photo azimuth, then
# symmetric front-side, side, and back-side pairs.
HORIZONTAL_AZIMUTHS = (180.0, 0.0, 45.0, 315.0, 90.0, 270.0, 135.0, 225.0)

DEFAULT_FOV_DEG = 45.0

# Auto-framing: distance = margin * bounding radius / tan(fov/2).
FIT_MARGIN = 1.4


class ViewRole(Enum):
    """What a view contributes to the run."""

    FRONT_PHOTO = "front_photo"  # consumes the photograph directly
    BACK_REFERENCE = "back_reference"  # generates the rear anchor image
    GENERATED = "generated"  # plain generated view


@dataclass(frozen=True)
class Viewpoint:
    """One camera placement on the orbit sphere.

    Attributes:
        azimuth_deg: degrees about +Z relative to the photo direction,
            in [0, 360).
        elevation_deg: degrees above the horizontal plane; exactly
            +-90 for the vertical views.
        distance: range from the mesh bounds center, model units.
        index: position 0..9 in the canonical view list.
        fov_deg: vertical field of view.
        role: ViewRole tag.
    """

    azimuth_deg: float
    elevation_deg: float
    distance: float
    index: int
    fov_deg: float = DEFAULT_FOV_DEG
    role: ViewRole = ViewRole.GENERATED

    def __post_init__(self) -> None:
        if not 0.0 <= self.azimuth_deg < 360.0:
            raise ConfigError(f"azimuth {self.azimuth_deg} outside [0, 360)")
        if not -90.0 <= self.elevation_deg <= 90.0:
            raise ConfigError(f"elevation {self.elevation_deg} outside [-90, 90]")
        if self.distance <= 0.0:
            raise ConfigError("view distance must be positive")


@dataclass(frozen=True)
class CameraMats:
    """World-to-camera rigid transform plus pinhole intrinsics.

    Camera frame: x right, y down, z forward (toward the scene), so
    depth is the camera-space z coordinate. Pixel (r, c) has center
    (c + 0.5, r + 0.5); the principal point sits at the image center.
    """

    rotation: np.ndarray  # (3, 3), rows = right / down / forward
    translation: np.ndarray  # (3,)
    focal: float  # pixels, square pixels assumed
    principal: tuple[float, float]  # (cx, cy)
    image_size: tuple[int, int]  # (width, height)

    @property
    def position(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        """World points (n, 3) to camera space (n, 3)."""
        return points @ self.rotation.T + self.translation

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """World points (n, 3) to pixel coordinates and depths.

        Returns:
            xy: (n, 2) continuous pixel coordinates.
            z: (n,) camera-space depth (positive in front of camera).
        """
        cam = self.to_camera(np.asarray(points, dtype=np.float64))
        z = cam[:, 2]
        safe = np.where(np.abs(z) < 1e-300, 1e-300, z)
        xy = np.empty((cam.shape[0], 2), dtype=np.float64)
        xy[:, 0] = self.focal * cam[:, 0] / safe + self.principal[0]
        xy[:, 1] = self.focal * cam[:, 1] / safe + self.principal[1]
        return xy, z


def _orbit_offset(azimuth_deg: float, elevation_deg: float) -> np.ndarray:
    """Unit vector from the target toward the camera."""
    az = math.radians(azimuth_deg)
    el = math.radians(elevation_deg)
    # Azimuth 0 places the camera on -Y; positive azimuth rotates CCW
    # about +Z.
    horiz = np.array([math.sin(az), -math.cos(az), 0.0])
    return math.cos(el) * horiz + math.sin(el) * np.array([0.0, 0.0, 1.0])


def default_view_set(
    distance: float, fov_deg: float = DEFAULT_FOV_DEG
) -> list[Viewpoint]:
    """The canonical 10 views: 8 on the horizontal ring, then top and
    bottom. Index 0 is the 180-degree back view, index 1 the photo view.
    """
    if distance <= 0.0:
        raise ConfigError("view distance must be positive")
    views: list[Viewpoint] = []
    for i, az in enumerate(HORIZONTAL_AZIMUTHS):
        if az == 180.0:
            role = ViewRole.BACK_REFERENCE
        elif az == 0.0:
            role = ViewRole.FRONT_PHOTO
        else:
            role = ViewRole.GENERATED
        views.append(
            Viewpoint(
                azimuth_deg=az,
                elevation_deg=0.0,
                distance=distance,
                index=i,
                fov_deg=fov_deg,
                role=role,
            )
        )
    views.append(
        Viewpoint(
            azimuth_deg=0.0,
            elevation_deg=90.0,
            distance=distance,
            index=8,
            fov_deg=fov_deg,
        )
    )
    views.append(
        Viewpoint(
            azimuth_deg=0.0,
            elevation_deg=-90.0,
            distance=distance,
            index=9,
            fov_deg=fov_deg,
        )
    )
    return views


def auto_distance(bounding_radius: float, fov_deg: float = DEFAULT_FOV_DEG) -> float:
    """Orbit distance that frames the bounding sphere with margin."""
    if bounding_radius <= 0.0:
        raise ConfigError("bounding radius must be positive")
    return FIT_MARGIN * bounding_radius / math.tan(math.radians(fov_deg) / 2.0)


def camera_mats(
    view: Viewpoint,
    mesh_bounds: tuple[np.ndarray, np.ndarray],
    image_size: int | tuple[int, int],
) -> CameraMats:
    """Build the world-to-camera transform and intrinsics for a view.

    The camera sits on the orbit sphere around the bounds center and
    looks at it. For horizontal views the up-vector is world-vertical;
    the vertical views use the azimuth-0 horizontal direction instead,
    which pins their roll deterministically.
    """
    lo = np.asarray(mesh_bounds[0], dtype=np.float64)
    hi = np.asarray(mesh_bounds[1], dtype=np.float64)
    if np.linalg.norm(hi - lo) == 0.0:
        raise ConfigError("mesh bounds have zero extent")
    if isinstance(image_size, int):
        image_size = (image_size, image_size)
    width, height = int(image_size[0]), int(image_size[1])
    if width <= 0 or height <= 0:
        raise ConfigError("image size must be positive")

    center = (lo + hi) / 2.0
    position = center + view.distance * _orbit_offset(
        view.azimuth_deg, view.elevation_deg
    )
    forward = center - position
    forward = forward / np.linalg.norm(forward)
    if abs(view.elevation_deg) == 90.0:
        # Looking straight along +-Z: world-vertical is degenerate, so
        # pin the roll with the photo view's line of sight (+Y).
        up = np.array([0.0, 1.0, 0.0])
    else:
        up = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, up)
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])
    translation = -rotation @ position
    focal = (height / 2.0) / math.tan(math.radians(view.fov_deg) / 2.0)
    return CameraMats(
        rotation=rotation,
        translation=translation,
        focal=focal,
        principal=(width / 2.0, height / 2.0),
        image_size=(width, height),
    )


def views_to_json(views: list[Viewpoint], path: str | Path) -> None:
    """Dump the view set for debugging (`views.json`)."""
    payload = [
        {
            "index": v.index,
            "azimuth_deg": v.azimuth_deg,
            "elevation_deg": v.elevation_deg,
            "distance": v.distance,
            "fov_deg": v.fov_deg,
            "role": v.role.value,
        }
        for v in views
    ]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
