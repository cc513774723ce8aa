"""Procedural fixtures: synthetic meshes, photos, and run configs.

Everything here is deterministic so runs over these inputs can be
compared byte-for-byte. `python -m ultraman.fixtures --out DIR` writes
the full set to disk along with ready-to-use run configs.

Pipeline fixtures come in pairs: the mesh handed to the run carries no
vertex colors (the atlas starts empty and coverage numbers mean
something), while a colored twin of the same geometry produces the
front "photograph" by baking and rendering.
"""

from __future__ import annotations

import argparse
import json
import math
from pathlib import Path

import numpy as np

from ultraman import render as render_mod
from ultraman import views as views_mod
from ultraman.atlas import bake_vertex_colors
from ultraman.images import InputImage
from ultraman.meshcore import Mesh, bounding_center_radius, bounds, compute_normals
from ultraman.unwrap import unwrap_triangle_grid

SAMPLE_ANSWERS = {
    "clothing_style": "fitted athletic bodysuit",
    "clothing_colors": "teal torso with gray limbs",
    "facial_features": "smooth rounded face, calm expression",
    "hairstyle": "short dark hair",
    "accessories": "none",
    "gender_age": "androgynous adult",
}


def uv_sphere(
    stacks: int = 21,
    slices: int = 24,
    radius: float = 1.0,
    center: tuple[float, float, float] = (0.0, 0.0, 0.0),
) -> Mesh:
    """Lat-long sphere: 2 + slices*(stacks-1) vertices, 2*slices*(stacks-1) faces."""
    cz = np.asarray(center, dtype=np.float64)
    verts = [cz + (0.0, 0.0, radius)]
    for i in range(1, stacks):
        phi = math.pi * i / stacks
        z = radius * math.cos(phi)
        r = radius * math.sin(phi)
        for j in range(slices):
            theta = 2.0 * math.pi * j / slices
            verts.append(cz + (r * math.cos(theta), r * math.sin(theta), z))
    verts.append(cz + (0.0, 0.0, -radius))
    south = len(verts) - 1

    def ring(i: int, j: int) -> int:
        return 1 + (i - 1) * slices + (j % slices)

    faces = []
    for j in range(slices):
        faces.append((0, ring(1, j), ring(1, j + 1)))
    for i in range(1, stacks - 1):
        for j in range(slices):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            faces.append((a, c, d))
            faces.append((a, d, b))
    for j in range(slices):
        faces.append((south, ring(stacks - 1, j + 1), ring(stacks - 1, j)))

    mesh = Mesh(
        vertices=np.asarray(verts, dtype=np.float64),
        faces=np.asarray(faces, dtype=np.int32),
    )
    mesh.validate()
    return mesh


def unit_cube() -> Mesh:
    """Axis-aligned unit cube, 8 vertices, 12 faces.

    Face diagonals all connect even-parity corners, which splits every
    corner's incident area evenly across its three face planes — so
    per-vertex area-weighted normals come out along the exact corner
    diagonals normalize(+-1, +-1, +-1).
    """
    verts = np.array(
        [
            [0, 0, 0],
            [1, 0, 0],
            [0, 1, 0],
            [1, 1, 0],
            [0, 0, 1],
            [1, 0, 1],
            [0, 1, 1],
            [1, 1, 1],
        ],
        dtype=np.float64,
    )
    # Each quad is split along the diagonal between its two
    # even-parity corners (parity = x ^ y ^ z).
    faces = np.array(
        [
            [0, 3, 1],
            [0, 2, 3],  # z = 0, normal -Z
            [4, 5, 6],
            [5, 7, 6],  # z = 1, normal +Z
            [0, 1, 5],
            [0, 5, 4],  # y = 0, normal -Y
            [2, 6, 3],
            [3, 6, 7],  # y = 1, normal +Y
            [0, 4, 6],
            [0, 6, 2],  # x = 0, normal -X
            [1, 3, 5],
            [3, 7, 5],  # x = 1, normal +X
        ],
        dtype=np.int32,
    )
    mesh = Mesh(vertices=verts, faces=faces)
    mesh.validate()
    return mesh


def flat_quad(size: float = 1.0, z: float = 0.0) -> Mesh:
    """Two-triangle square in the XY plane with identity-like UVs."""
    half = size / 2.0
    verts = np.array(
        [
            [-half, -half, z],
            [half, -half, z],
            [half, half, z],
            [-half, half, z],
        ]
    )
    faces = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32)
    uvs = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    mesh = Mesh(vertices=verts, faces=faces, uvs=uvs)
    mesh.validate()
    return mesh


def gradient_colors(mesh: Mesh, base=(0.55, 0.45, 0.5), amplitude: float = 0.3) -> Mesh:
    """Attach a gentle positional color gradient.

    Smooth low-frequency colors keep the nearest-sampling round trip
    through the atlas nearly lossless, which the front-fidelity checks
    rely on.
    """
    lo, hi = bounds(mesh)
    span = np.maximum(hi - lo, 1e-12)
    t = (mesh.vertices - lo) / span  # per-axis 0..1
    out = mesh.copy()
    colors = np.empty((mesh.num_vertices, 3))
    colors[:, 0] = base[0] + amplitude * (t[:, 0] - 0.5)
    colors[:, 1] = base[1] + amplitude * (t[:, 2] - 0.5)
    colors[:, 2] = base[2] + amplitude * (t[:, 1] - 0.5)
    out.vertex_colors = np.clip(colors, 0.0, 1.0)
    return out


# --------------------------------------------------------------------------
# Humanoid: bodies of revolution, one UV chart per part.


def _revolution(
    axis_start,
    axis_end,
    offsets: np.ndarray,
    radii: np.ndarray,
    segments: int,
    uv_rect: tuple[float, float, float, float],
    color_fn,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Surface of revolution around the segment start->end.

    `offsets` are signed distances along the axis from `axis_start`
    (so cap rings may sit before 0 or past the segment length); radii
    of 0 close the shape at that ring. The angle seam duplicates its
    column so the chart unwraps cleanly into uv_rect (u0, v0, u1, v1),
    with u along the angle and v spaced by cumulative lateral area so
    each texel row carries a comparable share of real surface.
    """
    p0 = np.asarray(axis_start, dtype=np.float64)
    p1 = np.asarray(axis_end, dtype=np.float64)
    axis = p1 - p0
    axis = axis / np.linalg.norm(axis)
    # Stable perpendicular frame.
    helper = np.array([0.0, 0.0, 1.0])
    if abs(float(axis @ helper)) > 0.9:
        helper = np.array([1.0, 0.0, 0.0])
    u_dir = np.cross(axis, helper)
    u_dir = u_dir / np.linalg.norm(u_dir)
    v_dir = np.cross(axis, u_dir)

    rows = len(offsets)
    cols = segments + 1
    offsets = np.asarray(offsets, dtype=np.float64)
    radii = np.asarray(radii, dtype=np.float64)
    # Frustum lateral area between consecutive rings drives the v
    # spacing, so pole caps don't hog texel rows.
    slant = np.hypot(np.diff(offsets), np.diff(radii))
    band_area = (radii[:-1] + radii[1:]) * slant
    ring_v = np.concatenate([[0.0], np.cumsum(band_area)])
    if ring_v[-1] > 0.0:
        ring_v /= ring_v[-1]
    else:
        ring_v = np.linspace(0.0, 1.0, rows)
    verts = np.empty((rows * cols, 3))
    uvs = np.empty((rows * cols, 2))
    u0, v0, u1, v1 = uv_rect
    for i, (s, r) in enumerate(zip(offsets, radii)):
        center = p0 + axis * s
        for j in range(cols):
            theta = 2.0 * math.pi * (j % segments) / segments
            pos = center + r * (math.cos(theta) * u_dir + math.sin(theta) * v_dir)
            k = i * cols + j
            verts[k] = pos
            uvs[k] = (
                u0 + (u1 - u0) * j / segments,
                v0 + (v1 - v0) * ring_v[i],
            )
    faces = []
    for i in range(rows - 1):
        for j in range(segments):
            a = i * cols + j
            b = i * cols + j + 1
            c = (i + 1) * cols + j
            d = (i + 1) * cols + j + 1
            if radii[i] > 1e-12:  # skip the degenerate pole triangle
                faces.append((a, b, d))
            if radii[i + 1] > 1e-12:
                faces.append((a, d, c))
    colors = np.clip(color_fn(verts), 0.0, 1.0)
    return verts, np.asarray(faces, dtype=np.int32), uvs, colors


def _capsule_profile(
    radius: float, length: float, n_cap0: int, n_body: int, n_cap1: int
) -> tuple[np.ndarray, np.ndarray]:
    """Cylinder of `length` with hemispherical end caps of `radius`.

    Returns (offsets, radii) for _revolution; offsets run from -radius
    (start apex) to length + radius (end apex).
    """
    offsets = [-radius]
    radii = [0.0]
    for k in range(1, n_cap0 + 1):
        a = math.pi / 2 * k / n_cap0
        offsets.append(-radius * math.cos(a))
        radii.append(radius * math.sin(a))
    for k in range(1, n_body + 1):
        offsets.append(length * k / n_body)
        radii.append(radius)
    for k in range(1, n_cap1 + 1):
        a = math.pi / 2 * k / n_cap1
        offsets.append(length + radius * math.sin(a))
        radii.append(radius * math.cos(a))
    return np.asarray(offsets), np.asarray(radii)


def humanoid(colored: bool = False) -> Mesh:
    """Low-poly articulated figure in an A-pose, one UV chart per part.

    Head, torso, two arms, two legs as closed capsules whose joints
    barely interpenetrate, so almost every texel is observable from
    the ten-view orbit. Charts pack into disjoint atlas rectangles
    with clear gaps. Around 2.5k faces.
    """
    parts = []

    def skin(base, amp=0.10):
        def fn(v):
            out = np.empty((v.shape[0], 3))
            out[:, 0] = base[0] + amp * np.sin(3.0 * v[:, 2])
            out[:, 1] = base[1] + amp * np.cos(2.0 * v[:, 0] + v[:, 2])
            out[:, 2] = base[2] + amp * np.sin(2.0 * v[:, 1] - v[:, 2])
            return out

        return fn

    head_off, head_rad = _capsule_profile(0.13, 1e-4, 6, 1, 6)
    parts.append(
        _revolution(  # head: a sphere, resting on the torso apex
            (0.0, 0.0, 1.610),
            (0.0, 0.0, 1.615),
            head_off,
            head_rad,
            20,
            (0.02, 0.76, 0.23, 0.98),
            skin((0.75, 0.62, 0.52)),
        )
    )
    torso_off, torso_rad = _capsule_profile(0.175, 0.28, 5, 6, 5)
    parts.append(
        _revolution(  # torso
            (0.0, 0.0, 1.035),
            (0.0, 0.0, 1.315),
            torso_off,
            torso_rad,
            24,
            (0.27, 0.52, 0.73, 0.98),
            skin((0.20, 0.55, 0.58)),
        )
    )
    arm_off, arm_rad = _capsule_profile(0.05, 0.40, 3, 5, 3)
    parts.append(
        _revolution(  # left arm, shoulder ball tangent to the torso
            (0.20, 0.0, 1.30),
            (0.43, 0.0, 0.97),
            arm_off,
            arm_rad,
            12,
            (0.76, 0.52, 0.87, 0.98),
            skin((0.72, 0.60, 0.50)),
        )
    )
    parts.append(
        _revolution(  # right arm
            (-0.20, 0.0, 1.30),
            (-0.43, 0.0, 0.97),
            arm_off,
            arm_rad,
            12,
            (0.88, 0.52, 0.99, 0.98),
            skin((0.72, 0.60, 0.50)),
        )
    )
    leg_off, leg_rad = _capsule_profile(0.072, 0.72, 4, 7, 4)
    parts.append(
        _revolution(  # left leg, hip ball tangent to the torso bottom
            (0.102, 0.0, 0.905),
            (0.15, 0.0, 0.19),
            leg_off,
            leg_rad,
            14,
            (0.02, 0.02, 0.23, 0.48),
            skin((0.35, 0.36, 0.42)),
        )
    )
    parts.append(
        _revolution(  # right leg
            (-0.102, 0.0, 0.905),
            (-0.15, 0.0, 0.19),
            leg_off,
            leg_rad,
            14,
            (0.27, 0.02, 0.48, 0.48),
            skin((0.35, 0.36, 0.42)),
        )
    )

    all_v = []
    all_f = []
    all_uv = []
    all_c = []
    offset = 0
    for verts, faces, uvs, colors in parts:
        all_v.append(verts)
        all_f.append(faces + offset)
        all_uv.append(uvs)
        all_c.append(colors)
        offset += verts.shape[0]
    mesh = Mesh(
        vertices=np.concatenate(all_v),
        faces=np.concatenate(all_f).astype(np.int32),
        uvs=np.clip(np.concatenate(all_uv), 0.0, 1.0),
    )
    if colored:
        mesh.vertex_colors = np.concatenate(all_c)
    mesh = compute_normals(mesh)
    mesh.validate()
    return mesh


def perturbed_sphere(seed: int = 0, stacks: int = 11, slices: int = 10) -> Mesh:
    """Random bumpy sphere (200 faces at the defaults) for oracles."""
    mesh = uv_sphere(stacks=stacks, slices=slices)
    rng = np.random.default_rng(seed)
    radii = 1.0 + 0.2 * rng.uniform(-1.0, 1.0, size=mesh.num_vertices)
    mesh.vertices = mesh.vertices * radii[:, None]
    return mesh


# --------------------------------------------------------------------------
# Photographs and on-disk fixture sets.


def front_photo(
    colored_mesh: Mesh,
    render_resolution: int,
    fov_deg: float,
    distance: float,
    bake_resolution: int = 1024,
) -> InputImage:
    """Render the colored twin from the photo view; that's the input photo."""
    mesh = colored_mesh
    if mesh.uvs is None:
        mesh = unwrap_triangle_grid(mesh)
    if mesh.normals is None:
        mesh = compute_normals(mesh)
    atlas = bake_vertex_colors(mesh, bake_resolution)
    view = views_mod.default_view_set(distance, fov_deg)[1]
    cams = views_mod.camera_mats(view, bounds(mesh), render_resolution)
    shot = render_mod.render_color(mesh, atlas, cams)
    return InputImage(shot.pixels)


def fixture_run_config(
    name: str,
    out_dir: Path,
    render_resolution: int = 768,
    atlas_resolution: int = 1024,
    seed: int = 0,
) -> dict:
    """Run-config document pointing at the fixture files by name."""
    return {
        "mesh_path": f"{name}.obj",
        "front_image_path": f"{name}_front.png",
        "answers_path": "answers.json",
        "output_dir": f"out_{name}",
        "render_resolution": render_resolution,
        "atlas_resolution": atlas_resolution,
        "backend": "mock",
        "global_seed": seed,
    }


def write_fixture_set(
    out_dir: str | Path,
    render_resolution: int = 768,
    atlas_resolution: int = 1024,
    sphere_faces_target: int = 20000,
) -> dict[str, Path]:
    """Write sphere + humanoid fixtures, photos, answers, run configs."""
    from ultraman.meshcore import save_mesh

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}

    # Sphere sized to the requested face count: faces = 2*s*(stacks-1).
    half = sphere_faces_target // 2
    slices = max(int(round(math.sqrt(half))), 3)
    stacks = max(half // slices + 1, 3)
    sphere = uv_sphere(stacks=stacks, slices=slices)
    _, radius = bounding_center_radius(sphere)
    distance = views_mod.auto_distance(radius)

    sphere_path = out_dir / "sphere.obj"
    save_mesh(sphere, sphere_path)
    written["sphere"] = sphere_path
    photo = front_photo(
        gradient_colors(sphere), render_resolution, views_mod.DEFAULT_FOV_DEG, distance
    )
    from ultraman.images import save_image

    sphere_photo_path = out_dir / "sphere_front.png"
    save_image(photo, sphere_photo_path)
    written["sphere_front"] = sphere_photo_path

    man = humanoid(colored=False)
    man_path = out_dir / "humanoid.obj"
    save_mesh(man, man_path)
    written["humanoid"] = man_path
    _, man_radius = bounding_center_radius(man)
    man_distance = views_mod.auto_distance(man_radius)
    man_photo = front_photo(
        humanoid(colored=True),
        render_resolution,
        views_mod.DEFAULT_FOV_DEG,
        man_distance,
    )
    man_photo_path = out_dir / "humanoid_front.png"
    save_image(man_photo, man_photo_path)
    written["humanoid_front"] = man_photo_path

    answers_path = out_dir / "answers.json"
    with open(answers_path, "w") as fh:
        json.dump(SAMPLE_ANSWERS, fh, indent=2)
        fh.write("\n")
    written["answers"] = answers_path

    for name, dist in (("sphere", distance), ("humanoid", man_distance)):
        cfg = fixture_run_config(
            name, out_dir, render_resolution, atlas_resolution
        )
        cfg["distance"] = dist
        cfg_path = out_dir / f"run_{name}.json"
        with open(cfg_path, "w") as fh:
            json.dump(cfg, fh, indent=2)
            fh.write("\n")
        written[f"run_{name}"] = cfg_path
    return written


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="Write the synthetic fixture set (meshes, photos, configs)."
    )
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--render-resolution", type=int, default=768)
    parser.add_argument("--atlas-resolution", type=int, default=1024)
    parser.add_argument(
        "--sphere-faces", type=int, default=20000, help="sphere face budget"
    )
    args = parser.parse_args(argv)
    written = write_fixture_set(
        args.out,
        render_resolution=args.render_resolution,
        atlas_resolution=args.atlas_resolution,
        sphere_faces_target=args.sphere_faces,
    )
    for key, path in written.items():
        print(f"{key}: {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
