"""File formats: PLY point clouds/meshes, raw depth/normal maps, camera JSON.

Raw map format ("HWDM"): a 16-byte header of magic b"HWDM", width u32,
height u32, channels u32 (all little-endian), followed by float32 row-major
samples. Depth maps store 1 channel, normal maps 3. Invalid pixels are NaN.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import InputError
from .camera import Camera, DepthMap, NormalMap
from .mesh import TriangleMesh
from .pointcloud import PointCloud

_HWDM_MAGIC = b"HWDM"


def write_raw_map(path, array: np.ndarray) -> None:
    """Write a (H, W) or (H, W, C) float array in the HWDM raw format."""
    arr = np.asarray(array, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.ndim != 3:
        raise InputError("raw map must be (H, W) or (H, W, C)")
    h, w, c = arr.shape
    header = _HWDM_MAGIC + struct.pack("<III", w, h, c)
    with open(path, "wb") as f:
        f.write(header)
        f.write(arr.tobytes(order="C"))


def read_raw_map(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.read(16)
        if len(header) != 16 or header[:4] != _HWDM_MAGIC:
            raise InputError(f"{path}: not an HWDM raw map (bad magic at offset 0)")
        w, h, c = struct.unpack("<III", header[4:])
        data = np.frombuffer(f.read(), dtype=np.float32)
    if data.size != w * h * c:
        raise InputError(
            f"{path}: payload holds {data.size} floats, header promises {w * h * c}"
        )
    arr = data.reshape(h, w, c).astype(np.float64)
    return arr[..., 0] if c == 1 else arr


def write_depth(path, depth: DepthMap) -> None:
    values = np.where(depth.valid, depth.values, np.nan)
    write_raw_map(path, values)


def read_depth(path) -> DepthMap:
    arr = read_raw_map(path)
    if arr.ndim != 2:
        raise InputError(f"{path}: depth map must have 1 channel")
    valid = np.isfinite(arr) & (arr > 0)
    return DepthMap(values=np.where(valid, arr, 1.0), valid=valid)


def write_normals(path, normals: NormalMap) -> None:
    vec = np.where(normals.valid[..., None], normals.vectors, np.nan)
    write_raw_map(path, vec)


def read_normals(path) -> NormalMap:
    arr = read_raw_map(path)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InputError(f"{path}: normal map must have 3 channels")
    norms = np.linalg.norm(arr, axis=-1)
    valid = np.isfinite(norms) & (norms > 1e-6)
    vec = np.zeros_like(arr)
    vec[valid] = arr[valid] / norms[valid][:, None]
    return NormalMap(vectors=vec, valid=valid)


def write_camera_json(path, cam: Camera) -> None:
    Path(path).write_text(json.dumps(cam.to_dict(), indent=2, sort_keys=True) + "\n")


def read_camera_json(path) -> Camera:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: invalid camera JSON at offset {e.pos}: {e.msg}")
    return Camera.from_dict(d)


# ---------------------------------------------------------------------------
# PLY
# ---------------------------------------------------------------------------


def write_ply_pointcloud(path, pc: PointCloud, binary: bool = True) -> None:
    n = len(pc)
    props = ["property float x", "property float y", "property float z"]
    if pc.colors is not None:
        props += [
            "property uchar red",
            "property uchar green",
            "property uchar blue",
        ]
    if pc.normals is not None:
        props += ["property float nx", "property float ny", "property float nz"]
    fmt = "binary_little_endian 1.0" if binary else "ascii 1.0"
    header = (
        ["ply", f"format {fmt}", f"element vertex {n}"]
        + props
        + ["end_header"]
    )
    pos = pc.positions.astype(np.float32)
    col = (
        np.clip(np.round(pc.colors * 255.0), 0, 255).astype(np.uint8)
        if pc.colors is not None
        else None
    )
    nrm = pc.normals.astype(np.float32) if pc.normals is not None else None
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            rec = []
            for i in range(n):
                rec.append(pos[i].tobytes())
                if col is not None:
                    rec.append(col[i].tobytes())
                if nrm is not None:
                    rec.append(nrm[i].tobytes())
            f.write(b"".join(rec))
        else:
            lines = []
            for i in range(n):
                parts = [f"{x:.7g}" for x in pos[i]]
                if col is not None:
                    parts += [str(int(x)) for x in col[i]]
                if nrm is not None:
                    parts += [f"{x:.7g}" for x in nrm[i]]
                lines.append(" ".join(parts))
            f.write(("\n".join(lines) + ("\n" if lines else "")).encode("ascii"))


def write_ply_mesh(path, mesh: TriangleMesh, binary: bool = True) -> None:
    nv, nf = len(mesh.vertices), len(mesh.faces)
    props = ["property float x", "property float y", "property float z"]
    if mesh.vertex_colors is not None:
        props += [
            "property uchar red",
            "property uchar green",
            "property uchar blue",
        ]
    fmt = "binary_little_endian 1.0" if binary else "ascii 1.0"
    header = (
        ["ply", f"format {fmt}", f"element vertex {nv}"]
        + props
        + [
            f"element face {nf}",
            "property list uchar int vertex_indices",
            "end_header",
        ]
    )
    pos = mesh.vertices.astype(np.float32)
    col = (
        np.clip(np.round(mesh.vertex_colors * 255.0), 0, 255).astype(np.uint8)
        if mesh.vertex_colors is not None
        else None
    )
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            rec = []
            for i in range(nv):
                rec.append(pos[i].tobytes())
                if col is not None:
                    rec.append(col[i].tobytes())
            faces32 = mesh.faces.astype("<i4")
            for i in range(nf):
                rec.append(b"\x03" + faces32[i].tobytes())
            f.write(b"".join(rec))
        else:
            lines = []
            for i in range(nv):
                parts = [f"{x:.7g}" for x in pos[i]]
                if col is not None:
                    parts += [str(int(x)) for x in col[i]]
                lines.append(" ".join(parts))
            for i in range(nf):
                lines.append("3 " + " ".join(str(int(x)) for x in mesh.faces[i]))
            f.write(("\n".join(lines) + "\n").encode("ascii"))


_PLY_TYPES = {
    "float": ("<f4", 4),
    "float32": ("<f4", 4),
    "double": ("<f8", 8),
    "float64": ("<f8", 8),
    "uchar": ("<u1", 1),
    "uint8": ("<u1", 1),
    "char": ("<i1", 1),
    "int8": ("<i1", 1),
    "short": ("<i2", 2),
    "ushort": ("<u2", 2),
    "int": ("<i4", 4),
    "int32": ("<i4", 4),
    "uint": ("<u4", 4),
    "uint32": ("<u4", 4),
}


def _parse_ply_header(f):
    if f.readline().strip() != b"ply":
        raise InputError("not a PLY file (missing 'ply' at offset 0)")
    fmt = None
    elements = []  # (name, count, [(prop_name, type) or ('list', idx_t, val_t, name)])
    while True:
        line = f.readline()
        if not line:
            raise InputError("PLY header ended before end_header")
        tokens = line.decode("ascii").strip().split()
        if not tokens:
            continue
        if tokens[0] == "comment":
            continue
        if tokens[0] == "format":
            fmt = tokens[1]
        elif tokens[0] == "element":
            elements.append((tokens[1], int(tokens[2]), []))
        elif tokens[0] == "property":
            if tokens[1] == "list":
                elements[-1][2].append(("list", tokens[2], tokens[3], tokens[4]))
            else:
                elements[-1][2].append((tokens[2], tokens[1]))
        elif tokens[0] == "end_header":
            break
    if fmt not in ("ascii", "binary_little_endian"):
        raise InputError(f"unsupported PLY format {fmt!r}")
    return fmt, elements


def read_ply(path):
    """Read a PLY file written by this module (or a compatible one).

    Returns a PointCloud when no face element is present, else TriangleMesh.
    Supports ascii and binary_little_endian with scalar vertex properties and
    one face list property.
    """
    with open(path, "rb") as f:
        fmt, elements = _parse_ply_header(f)
        data = {}
        for name, count, props in elements:
            if fmt == "ascii":
                rows = []
                for _ in range(count):
                    rows.append(f.readline().decode("ascii").split())
                data[name] = (props, rows)
            else:
                if any(p[0] == "list" for p in props):
                    rows = []
                    for _ in range(count):
                        (cnt,) = struct.unpack("<B", f.read(1))
                        idx_t = _PLY_TYPES[props[0][2]][0]
                        size = _PLY_TYPES[props[0][2]][1]
                        vals = np.frombuffer(f.read(size * cnt), dtype=idx_t)
                        rows.append(vals)
                    data[name] = (props, rows)
                else:
                    dtype = np.dtype([(p[0], _PLY_TYPES[p[1]][0]) for p in props])
                    buf = f.read(dtype.itemsize * count)
                    data[name] = (props, np.frombuffer(buf, dtype=dtype))
    vert_props, vert_data = data["vertex"]
    names = [p[0] for p in vert_props]
    if fmt == "ascii":
        arr = np.array([[float(x) for x in row] for row in vert_data], dtype=np.float64)
        arr = arr.reshape(len(vert_data), len(names))
        cols = {n: arr[:, i] for i, n in enumerate(names)}
    else:
        cols = {n: vert_data[n].astype(np.float64) for n in names}
    positions = np.stack([cols["x"], cols["y"], cols["z"]], axis=1)
    colors = None
    if "red" in cols:
        colors = np.stack([cols["red"], cols["green"], cols["blue"]], axis=1) / 255.0
    normals = None
    if "nx" in cols:
        normals = np.stack([cols["nx"], cols["ny"], cols["nz"]], axis=1)
    if "face" not in data:
        return PointCloud(positions=positions, colors=colors, normals=normals)
    _, face_rows = data["face"]
    if fmt == "ascii":
        faces = np.array(
            [[int(x) for x in row[1:4]] for row in face_rows], dtype=np.int64
        ).reshape(-1, 3)
    else:
        faces = np.array([row[:3] for row in face_rows], dtype=np.int64).reshape(-1, 3)
    return TriangleMesh(vertices=positions, faces=faces, vertex_colors=colors)
