"""Triangle mesh container plus OBJ / binary-PLY ingestion and export.

Everything downstream assumes per-vertex attributes, so OBJ corners that
disagree on texture or normal indices are split into distinct vertices
at load time. Quads and larger polygons are fan-triangulated.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ultraman.errors import MeshError


@dataclass
class Mesh:
    """Indexed triangle mesh with optional per-vertex attributes.

    Attributes:
        vertices: (n, 3) float64 positions.
        faces: (m, 3) int32 vertex indices, counter-clockwise.
        normals: optional (n, 3) float64 unit normals.
        uvs: optional (n, 2) float64 texture coordinates in [0, 1].
        vertex_colors: optional (n, 3) float64 linear colors in [0, 1].
        warnings: non-fatal notes accumulated by loaders and operators.
    """

    vertices: np.ndarray
    faces: np.ndarray
    normals: np.ndarray | None = None
    uvs: np.ndarray | None = None
    vertex_colors: np.ndarray | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def num_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def num_faces(self) -> int:
        return int(self.faces.shape[0])

    def copy(self) -> "Mesh":
        return Mesh(
            vertices=self.vertices.copy(),
            faces=self.faces.copy(),
            normals=None if self.normals is None else self.normals.copy(),
            uvs=None if self.uvs is None else self.uvs.copy(),
            vertex_colors=(
                None if self.vertex_colors is None else self.vertex_colors.copy()
            ),
            warnings=list(self.warnings),
        )

    def validate(self) -> None:
        """Check structural invariants, raising MeshError on the first break."""
        v, f = self.vertices, self.faces
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError(f"vertices must be (n, 3), got {v.shape}")
        if v.shape[0] == 0:
            raise MeshError("mesh has no vertices")
        if not np.isfinite(v).all():
            raise MeshError("vertices contain non-finite values")
        if f.ndim != 2 or f.shape[1] != 3:
            raise MeshError(f"faces must be (m, 3), got {f.shape}")
        if f.shape[0] == 0:
            raise MeshError("mesh has no faces")
        if f.min() < 0 or f.max() >= v.shape[0]:
            raise MeshError("face index out of range")
        degen = (
            (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        )
        if degen.any():
            raise MeshError(f"face {int(np.flatnonzero(degen)[0])} repeats a vertex")
        for name, arr, width in (
            ("normals", self.normals, 3),
            ("uvs", self.uvs, 2),
            ("vertex_colors", self.vertex_colors, 3),
        ):
            if arr is None:
                continue
            if arr.shape != (v.shape[0], width):
                raise MeshError(
                    f"{name} shape {arr.shape} does not match {v.shape[0]} vertices"
                )
            if not np.isfinite(arr).all():
                raise MeshError(f"{name} contain non-finite values")
        if self.normals is not None:
            lengths = np.linalg.norm(self.normals, axis=1)
            if not np.allclose(lengths, 1.0, atol=1e-5):
                raise MeshError("normals are not unit length")
        if self.uvs is not None:
            if self.uvs.min() < -1e-9 or self.uvs.max() > 1.0 + 1e-9:
                raise MeshError("uvs fall outside [0, 1]")
        if self.vertex_colors is not None:
            if self.vertex_colors.min() < -1e-9 or self.vertex_colors.max() > 1 + 1e-9:
                raise MeshError("vertex colors fall outside [0, 1]")


def bounds(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned bounding box as (min_xyz, max_xyz)."""
    if mesh.vertices.shape[0] == 0:
        raise MeshError("mesh has no vertices")
    return mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)


def bounding_center_radius(mesh: Mesh) -> tuple[np.ndarray, float]:
    """Bounding-box center and the max vertex distance from it."""
    lo, hi = bounds(mesh)
    center = (lo + hi) / 2.0
    radius = float(np.linalg.norm(mesh.vertices - center, axis=1).max())
    return center, radius


def compute_normals(mesh: Mesh) -> Mesh:
    """Return a copy with area-weighted per-vertex normals.

    The cross product of two triangle edges already has magnitude twice
    the face area, so summing raw cross products per vertex gives the
    area-weighted average directly. Vertices with no non-degenerate
    incident face fall back to +Z and get a warning.
    """
    if mesh.faces.shape[0] == 0:
        raise MeshError("cannot compute normals without faces")
    v = mesh.vertices
    f = mesh.faces
    e1 = v[f[:, 1]] - v[f[:, 0]]
    e2 = v[f[:, 2]] - v[f[:, 0]]
    face_n = np.cross(e1, e2)  # magnitude = 2 * area

    acc = np.zeros_like(v)
    for k in range(3):
        np.add.at(acc, f[:, k], face_n)
    lengths = np.linalg.norm(acc, axis=1)
    out = mesh.copy()
    bad = lengths < 1e-20
    safe = np.where(bad, 1.0, lengths)
    normals = acc / safe[:, None]
    if bad.any():
        normals[bad] = (0.0, 0.0, 1.0)
        out.warnings.append(
            f"{int(bad.sum())} vertices had no usable incident face; normals set to +Z"
        )
    out.normals = normals
    return out


# --------------------------------------------------------------------------
# OBJ


def _parse_obj_index(token: str, count: int, what: str) -> int:
    idx = int(token)
    if idx > 0:
        idx -= 1
    elif idx < 0:
        idx += count
    else:
        raise MeshError(f"OBJ {what} index 0 is invalid")
    if idx < 0 or idx >= count:
        raise MeshError(f"OBJ {what} index {token} out of range (have {count})")
    return idx


def _load_obj(path: Path) -> Mesh:
    positions: list[tuple[float, ...]] = []
    colors: list[tuple[float, ...]] = []
    texcoords: list[tuple[float, float]] = []
    normals: list[tuple[float, float, float]] = []
    corners: list[tuple[int, int, int]] = []  # (v, vt, vn), -1 when absent
    warnings: list[str] = []

    with open(path, "r", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            try:
                if tag == "v":
                    if len(parts) not in (4, 7):
                        raise MeshError("expected 3 or 6 components")
                    positions.append(tuple(float(x) for x in parts[1:4]))
                    if len(parts) == 7:
                        colors.append(tuple(float(x) for x in parts[4:7]))
                    else:
                        colors.append(())
                elif tag == "vt":
                    if len(parts) < 3:
                        raise MeshError("expected at least 2 components")
                    texcoords.append((float(parts[1]), float(parts[2])))
                elif tag == "vn":
                    if len(parts) != 4:
                        raise MeshError("expected 3 components")
                    normals.append(tuple(float(x) for x in parts[1:4]))
                elif tag == "f":
                    if len(parts) < 4:
                        raise MeshError("face needs at least 3 corners")
                    face_corners = []
                    for tok in parts[1:]:
                        fields = tok.split("/")
                        vi = _parse_obj_index(fields[0], len(positions), "vertex")
                        ti = ni = -1
                        if len(fields) > 1 and fields[1]:
                            ti = _parse_obj_index(fields[1], len(texcoords), "texture")
                        if len(fields) > 2 and fields[2]:
                            ni = _parse_obj_index(fields[2], len(normals), "normal")
                        face_corners.append((vi, ti, ni))
                    # Fan triangulation for quads and larger polygons.
                    for k in range(1, len(face_corners) - 1):
                        corners.append(face_corners[0])
                        corners.append(face_corners[k])
                        corners.append(face_corners[k + 1])
                # Grouping, materials, smoothing and object tags carry no
                # geometry; they are intentionally skipped.
            except MeshError as exc:
                raise MeshError(f"{path}:{lineno}: {exc}") from None
            except ValueError as exc:
                raise MeshError(f"{path}:{lineno}: {exc}") from None

    if not positions:
        raise MeshError(f"{path}: no vertices")
    if not corners:
        raise MeshError(f"{path}: no faces")

    has_colors = any(c for c in colors)
    if has_colors and not all(c for c in colors):
        warnings.append("some OBJ vertices lack colors; colors dropped")
        has_colors = False

    has_uv = any(c[1] >= 0 for c in corners)
    has_norm = any(c[2] >= 0 for c in corners)
    if has_uv and not all(c[1] >= 0 for c in corners):
        raise MeshError(f"{path}: faces mix textured and untextured corners")

    pos = np.asarray(positions, dtype=np.float64)
    if not has_uv and not has_norm:
        faces = np.asarray([c[0] for c in corners], dtype=np.int32).reshape(-1, 3)
        mesh = Mesh(pos, faces, warnings=warnings)
        if has_colors:
            mesh.vertex_colors = np.asarray(colors, dtype=np.float64)
        mesh.validate()
        return mesh

    # Split corners so that every (position, uv, normal) combination is
    # one vertex; meshes exported with per-corner UVs land here.
    remap: dict[tuple[int, int, int], int] = {}
    face_list: list[int] = []
    for corner in corners:
        if corner not in remap:
            remap[corner] = len(remap)
        face_list.append(remap[corner])
    order = sorted(remap, key=remap.get)
    vi = np.asarray([c[0] for c in order], dtype=np.int64)
    mesh = Mesh(
        vertices=pos[vi],
        faces=np.asarray(face_list, dtype=np.int32).reshape(-1, 3),
        warnings=warnings,
    )
    if has_colors:
        mesh.vertex_colors = np.asarray(colors, dtype=np.float64)[vi]
    if has_uv:
        uv = np.asarray(texcoords, dtype=np.float64)
        mesh.uvs = np.clip(uv[[c[1] for c in order]], 0.0, 1.0)
    if has_norm:
        nrm = np.asarray(normals, dtype=np.float64)
        picked = np.zeros((len(order), 3))
        for row, corner in enumerate(order):
            picked[row] = nrm[corner[2]] if corner[2] >= 0 else (0.0, 0.0, 1.0)
        lengths = np.linalg.norm(picked, axis=1)
        lengths[lengths < 1e-20] = 1.0
        mesh.normals = picked / lengths[:, None]
    mesh.validate()
    return mesh


def save_obj(
    mesh: Mesh,
    path: str | Path,
    texture_name: str | None = None,
) -> None:
    """Write an OBJ file; with `texture_name`, also a sibling MTL.

    Vertex colors ride along as the non-standard but widely read
    6-component `v` line. UVs are stored in OBJ's own convention
    (v grows upward) so they go out untouched; texel addressing owns
    the row flip.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines: list[str] = []
    if texture_name is not None:
        mtl_path = path.with_suffix(".mtl")
        material = path.stem
        lines.append(f"mtllib {mtl_path.name}")
        lines.append(f"usemtl {material}")
        with open(mtl_path, "w") as mfh:
            mfh.write(
                f"newmtl {material}\n"
                "Ka 1.000 1.000 1.000\n"
                "Kd 1.000 1.000 1.000\n"
                "Ks 0.000 0.000 0.000\n"
                f"map_Kd {texture_name}\n"
            )
    for i, v in enumerate(mesh.vertices):
        if mesh.vertex_colors is not None:
            c = mesh.vertex_colors[i]
            lines.append(
                f"v {v[0]:.8g} {v[1]:.8g} {v[2]:.8g} {c[0]:.6g} {c[1]:.6g} {c[2]:.6g}"
            )
        else:
            lines.append(f"v {v[0]:.8g} {v[1]:.8g} {v[2]:.8g}")
    if mesh.uvs is not None:
        for uv in mesh.uvs:
            lines.append(f"vt {uv[0]:.8g} {uv[1]:.8g}")
    if mesh.normals is not None:
        for n in mesh.normals:
            lines.append(f"vn {n[0]:.8g} {n[1]:.8g} {n[2]:.8g}")
    has_uv = mesh.uvs is not None
    has_n = mesh.normals is not None
    for f in mesh.faces:
        a, b, c = (int(x) + 1 for x in f)
        if has_uv and has_n:
            lines.append(f"f {a}/{a}/{a} {b}/{b}/{b} {c}/{c}/{c}")
        elif has_uv:
            lines.append(f"f {a}/{a} {b}/{b} {c}/{c}")
        elif has_n:
            lines.append(f"f {a}//{a} {b}//{b} {c}//{c}")
        else:
            lines.append(f"f {a} {b} {c}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


# --------------------------------------------------------------------------
# PLY (binary little-endian)

_PLY_TYPES = {
    "char": "i1",
    "int8": "i1",
    "uchar": "u1",
    "uint8": "u1",
    "short": "i2",
    "int16": "i2",
    "ushort": "u2",
    "uint16": "u2",
    "int": "i4",
    "int32": "i4",
    "uint": "u4",
    "uint32": "u4",
    "float": "f4",
    "float32": "f4",
    "double": "f8",
    "float64": "f8",
}


def _load_ply(path: Path) -> Mesh:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"ply":
            raise MeshError(f"{path}: not a PLY file")
        fmt = None
        elements: list[tuple[str, int, list]] = []  # (name, count, props)
        while True:
            line = fh.readline()
            if not line:
                raise MeshError(f"{path}: truncated PLY header")
            tokens = line.decode("ascii", errors="replace").split()
            if not tokens or tokens[0] == "comment":
                continue
            if tokens[0] == "format":
                fmt = tokens[1]
            elif tokens[0] == "element":
                elements.append((tokens[1], int(tokens[2]), []))
            elif tokens[0] == "property":
                if not elements:
                    raise MeshError(f"{path}: property before element")
                if tokens[1] == "list":
                    elements[-1][2].append(("list", tokens[2], tokens[3], tokens[4]))
                else:
                    elements[-1][2].append(("scalar", tokens[1], tokens[2]))
            elif tokens[0] == "end_header":
                break
        if fmt != "binary_little_endian":
            raise MeshError(
                f"{path}: unsupported PLY format '{fmt}' (binary_little_endian only)"
            )
        data = fh.read()

    vertices = None
    vcolors = None
    vnormals = None
    faces: list[tuple[int, int, int]] = []
    offset = 0
    for name, count, props in elements:
        if all(p[0] == "scalar" for p in props):
            dtype = np.dtype(
                [(p[2], "<" + _PLY_TYPES[p[1]]) for p in props]
            )
            end = offset + dtype.itemsize * count
            if end > len(data):
                raise MeshError(f"{path}: PLY data truncated in element '{name}'")
            table = np.frombuffer(data[offset:end], dtype=dtype)
            offset = end
            if name == "vertex":
                fields = table.dtype.names
                if not all(k in fields for k in ("x", "y", "z")):
                    raise MeshError(f"{path}: vertex element lacks x/y/z")
                vertices = np.stack(
                    [table["x"], table["y"], table["z"]], axis=1
                ).astype(np.float64)
                if all(k in fields for k in ("red", "green", "blue")):
                    rgb = np.stack(
                        [table["red"], table["green"], table["blue"]], axis=1
                    )
                    scale = 255.0 if rgb.dtype.kind == "u" else 1.0
                    vcolors = np.clip(rgb.astype(np.float64) / scale, 0.0, 1.0)
                if all(k in fields for k in ("nx", "ny", "nz")):
                    vnormals = np.stack(
                        [table["nx"], table["ny"], table["nz"]], axis=1
                    ).astype(np.float64)
            continue
        # Element with at least one list property: walk it item by item.
        for _ in range(count):
            row_lists = []
            for p in props:
                if p[0] == "scalar":
                    size = np.dtype(_PLY_TYPES[p[1]]).itemsize
                    offset += size
                    continue
                cnt_dt = np.dtype("<" + _PLY_TYPES[p[1]])
                idx_dt = np.dtype("<" + _PLY_TYPES[p[2]])
                if offset + cnt_dt.itemsize > len(data):
                    raise MeshError(f"{path}: PLY data truncated in '{name}'")
                n_items = int(
                    np.frombuffer(data, dtype=cnt_dt, count=1, offset=offset)[0]
                )
                offset += cnt_dt.itemsize
                end = offset + idx_dt.itemsize * n_items
                if end > len(data):
                    raise MeshError(f"{path}: PLY data truncated in '{name}'")
                row_lists.append(
                    np.frombuffer(data, dtype=idx_dt, count=n_items, offset=offset)
                )
                offset = end
            if name == "face" and row_lists:
                idx = row_lists[0]
                if len(idx) < 3:
                    raise MeshError(f"{path}: face with fewer than 3 indices")
                for k in range(1, len(idx) - 1):
                    faces.append((int(idx[0]), int(idx[k]), int(idx[k + 1])))

    if vertices is None:
        raise MeshError(f"{path}: no vertex element")
    if not faces:
        raise MeshError(f"{path}: no faces")
    mesh = Mesh(
        vertices=vertices,
        faces=np.asarray(faces, dtype=np.int32),
        vertex_colors=vcolors,
    )
    if vnormals is not None:
        lengths = np.linalg.norm(vnormals, axis=1)
        lengths[lengths < 1e-20] = 1.0
        mesh.normals = vnormals / lengths[:, None]
    mesh.validate()
    return mesh


def save_ply(mesh: Mesh, path: str | Path) -> None:
    """Write binary little-endian PLY with positions and optional colors."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = mesh.num_vertices
    has_c = mesh.vertex_colors is not None
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += ["property float x", "property float y", "property float z"]
    if has_c:
        header += [
            "property uchar red",
            "property uchar green",
            "property uchar blue",
        ]
    header += [
        f"element face {mesh.num_faces}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        pos = mesh.vertices.astype("<f4")
        if has_c:
            rgb = np.rint(np.asarray(mesh.vertex_colors) * 255.0).astype(np.uint8)
            for i in range(n):
                fh.write(struct.pack("<fff", *pos[i]))
                fh.write(struct.pack("<BBB", *rgb[i]))
        else:
            fh.write(pos.tobytes())
        for f in mesh.faces:
            fh.write(struct.pack("<Biii", 3, int(f[0]), int(f[1]), int(f[2])))


def load_mesh(path: str | Path) -> Mesh:
    """Load a triangle mesh from OBJ or binary little-endian PLY."""
    path = Path(path)
    if not path.is_file():
        raise MeshError(f"mesh not found: {path}")
    suffix = path.suffix.lower()
    if suffix == ".obj":
        return _load_obj(path)
    if suffix == ".ply":
        return _load_ply(path)
    raise MeshError(f"unsupported mesh format '{suffix}' (use .obj or .ply)")


def save_mesh(mesh: Mesh, path: str | Path, texture_name: str | None = None) -> None:
    """Save as OBJ or PLY depending on the file extension."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        save_obj(mesh, path, texture_name=texture_name)
    elif suffix == ".ply":
        save_ply(mesh, path)
    else:
        raise MeshError(f"unsupported mesh format '{suffix}' (use .obj or .ply)")
