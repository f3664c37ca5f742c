"""Triangle meshes, ray casting, and spherical-grid panoramic meshing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError
from .camera import DepthMap
from .panorama import lonlat_to_direction

RAY_EPS = 1e-4  # self-intersection guard on hit distance, meters


@dataclass
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray
    face_flags: np.ndarray | None = None  # True where the face is stretched
    vertex_colors: np.ndarray | None = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(self.faces) and self.faces.max() >= len(self.vertices):
            raise InputError("face index out of range")
        if len(self.faces) and (
            np.any(self.faces[:, 0] == self.faces[:, 1])
            or np.any(self.faces[:, 1] == self.faces[:, 2])
            or np.any(self.faces[:, 0] == self.faces[:, 2])
        ):
            raise InputError("faces must reference three distinct vertices")
        if self.face_flags is not None:
            self.face_flags = np.asarray(self.face_flags, dtype=bool).reshape(-1)
            if len(self.face_flags) != len(self.faces):
                raise InputError("face_flags length differs from faces")
        if self.vertex_colors is not None:
            self.vertex_colors = np.asarray(self.vertex_colors, dtype=np.float64)
            if len(self.vertex_colors) != len(self.vertices):
                raise InputError("vertex_colors length differs from vertices")

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def face_normals(self) -> np.ndarray:
        """Unit normals following the stored winding (not re-oriented)."""
        tri = self.vertices[self.faces]
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        ln = np.linalg.norm(n, axis=1)
        ln[ln < 1e-300] = 1.0
        return n / ln[:, None]

    def face_centroids(self) -> np.ndarray:
        return self.vertices[self.faces].mean(axis=1)

    def bounds(self):
        if len(self.vertices) == 0:
            raise InputError("bounding box of an empty mesh")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


class RaycastScene:
    """Precomputed triangle soup supporting batched Moller-Trumbore queries.

    Hits report the nearest t > t_min; exact ties break to the lowest face
    index, which keeps results deterministic.
    """

    def __init__(self, mesh: TriangleMesh, face_chunk: int = 1024):
        tri = mesh.vertices[mesh.faces]
        self.v0 = tri[:, 0]
        self.e1 = tri[:, 1] - tri[:, 0]
        self.e2 = tri[:, 2] - tri[:, 0]
        self.mesh = mesh
        self.face_chunk = face_chunk

    @property
    def n_faces(self) -> int:
        return len(self.v0)

    def raycast_batch(self, origins, directions, t_min: float = RAY_EPS):
        """Nearest hit per ray.

        Returns (t, face, u, v): t = inf and face = -1 on a miss; (u, v) are
        barycentric coordinates of the hit inside its triangle.
        """
        origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
        directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
        n_rays = len(origins)
        best_t = np.full(n_rays, np.inf)
        best_f = np.full(n_rays, -1, dtype=np.int64)
        best_u = np.zeros(n_rays)
        best_v = np.zeros(n_rays)
        if self.n_faces == 0:
            return best_t, best_f, best_u, best_v
        ray_chunk = max(1, int(2e6 / max(self.face_chunk, 1)))
        for rs in range(0, n_rays, ray_chunk):
            re = min(rs + ray_chunk, n_rays)
            o = origins[rs:re][:, None, :]
            d = directions[rs:re][:, None, :]
            for fs in range(0, self.n_faces, self.face_chunk):
                fe = min(fs + self.face_chunk, self.n_faces)
                v0 = self.v0[None, fs:fe]
                e1 = self.e1[None, fs:fe]
                e2 = self.e2[None, fs:fe]
                pvec = np.cross(d, e2)
                det = np.einsum("rfk,rfk->rf", e1, pvec)
                with np.errstate(divide="ignore", invalid="ignore"):
                    inv = 1.0 / det
                    tvec = o - v0
                    u = np.einsum("rfk,rfk->rf", tvec, pvec) * inv
                    qvec = np.cross(tvec, e1)
                    v = np.einsum("rfk,rfk->rf", d, qvec) * inv
                    t = np.einsum("rfk,rfk->rf", e2, qvec) * inv
                eps = 1e-12
                with np.errstate(invalid="ignore"):
                    hit = (
                        (np.abs(det) > 1e-14)
                        & (u >= -eps)
                        & (v >= -eps)
                        & (u + v <= 1.0 + eps)
                        & (t > t_min)
                    )
                t = np.where(hit, t, np.inf)
                f_arg = np.argmin(t, axis=1)
                rows = np.arange(re - rs)
                t_best_chunk = t[rows, f_arg]
                better = t_best_chunk < best_t[rs:re]
                sel = rows[better]
                best_t[rs:re][better] = t_best_chunk[better]
                best_f[rs:re][better] = fs + f_arg[better]
                best_u[rs:re][better] = u[sel, f_arg[better]]
                best_v[rs:re][better] = v[sel, f_arg[better]]
        return best_t, best_f, best_u, best_v

    def raycast_all(self, origin, direction, t_min: float = RAY_EPS):
        """Every intersection along one ray, sorted by ascending t.

        Returns (t values, face indices).
        """
        o = np.asarray(origin, dtype=np.float64)[None, :]
        d = np.asarray(direction, dtype=np.float64)[None, :]
        ts, fs = [], []
        for cs in range(0, self.n_faces, self.face_chunk):
            ce = min(cs + self.face_chunk, self.n_faces)
            v0, e1, e2 = self.v0[cs:ce], self.e1[cs:ce], self.e2[cs:ce]
            pvec = np.cross(d, e2)
            det = np.einsum("fk,fk->f", e1, pvec)
            with np.errstate(divide="ignore", invalid="ignore"):
                inv = 1.0 / det
                tvec = o - v0
                u = np.einsum("fk,fk->f", tvec, pvec) * inv
                qvec = np.cross(tvec, e1)
                v = np.einsum("fk,fk->f", d, qvec) * inv
                t = np.einsum("fk,fk->f", e2, qvec) * inv
            eps = 1e-12
            with np.errstate(invalid="ignore"):
                hit = (
                    (np.abs(det) > 1e-14)
                    & (u >= -eps)
                    & (v >= -eps)
                    & (u + v <= 1.0 + eps)
                    & (t > t_min)
                )
            idx = np.nonzero(hit)[0]
            ts.append(t[idx])
            fs.append(idx + cs)
        t_all = np.concatenate(ts) if ts else np.zeros(0)
        f_all = np.concatenate(fs) if fs else np.zeros(0, dtype=np.int64)
        order = np.lexsort((f_all, t_all))
        return t_all[order], f_all[order]

    def segment_clear(self, a, b, margin: float = 0.0) -> bool:
        """True when no surface lies within |b - a| + margin along a -> b."""
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        d = b - a
        length = np.linalg.norm(d)
        if length < 1e-12:
            return True
        t, _, _, _ = self.raycast_batch(a[None], (d / length)[None])
        return bool(t[0] >= length + margin)

    def segments_clear(self, starts, ends, margin: float = 0.0) -> np.ndarray:
        starts = np.atleast_2d(starts)
        ends = np.atleast_2d(ends)
        d = ends - starts
        lengths = np.linalg.norm(d, axis=1)
        safe = np.maximum(lengths, 1e-12)
        t, _, _, _ = self.raycast_batch(starts, d / safe[:, None])
        return (t >= lengths + margin) | (lengths < 1e-12)


def raycast(mesh_or_scene, origin, direction, t_min: float = RAY_EPS):
    """Nearest intersection of one ray with a mesh.

    ``direction`` must be unit length. Returns (t, face_index) or None on a
    miss. Ties on t break to the lowest face index.
    """
    direction = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(direction) - 1.0) > 1e-6:
        raise InputError("ray direction must be unit length")
    scene = (
        mesh_or_scene
        if isinstance(mesh_or_scene, RaycastScene)
        else RaycastScene(mesh_or_scene)
    )
    t, f, _, _ = scene.raycast_batch(
        np.asarray(origin, dtype=np.float64)[None], direction[None], t_min=t_min
    )
    if f[0] < 0:
        return None
    return float(t[0]), int(f[0])


def render_mesh_depth(scene: RaycastScene, cam):
    """Ray-cast z-depth of a mesh from a camera.

    Returns (DepthMap, face indices (H, W), barycentric uv (H, W, 2));
    face index -1 marks misses. Depth is the camera-frame z of the hit.
    """
    from .camera import DepthMap

    rays = cam.pixel_rays().reshape(-1, 3)
    norms = np.linalg.norm(rays, axis=1)
    dirs_cam = rays / norms[:, None]
    dirs_world = dirs_cam @ cam.rotation.T
    origins = np.tile(cam.translation, (len(rays), 1))
    t, f, u, v = scene.raycast_batch(origins, dirs_world)
    hit = f >= 0
    z = np.where(hit, t * dirs_cam[:, 2], 1.0)
    h, w = cam.height, cam.width
    depth = DepthMap(
        values=np.where(hit & (z > 0), z, 1.0).reshape(h, w),
        valid=(hit & (z > 0)).reshape(h, w),
    )
    bary = np.stack([u, v], axis=-1).reshape(h, w, 2)
    return depth, f.reshape(h, w), bary


def interpolate_vertex_colors(mesh: TriangleMesh, faces_idx, bary):
    """Barycentric color lookup for render_mesh_depth hits."""
    if mesh.vertex_colors is None:
        raise InputError("mesh has no vertex colors")
    h, w = faces_idx.shape
    out = np.zeros((h, w, 3))
    hit = faces_idx >= 0
    f = faces_idx[hit]
    u = bary[hit][:, 0]
    v = bary[hit][:, 1]
    c0 = mesh.vertex_colors[mesh.faces[f, 0]]
    c1 = mesh.vertex_colors[mesh.faces[f, 1]]
    c2 = mesh.vertex_colors[mesh.faces[f, 2]]
    out[hit] = (
        c0 * (1 - u - v)[:, None] + c1 * u[:, None] + c2 * v[:, None]
    )
    return out


def stretch_edge_ratios(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Per-face ratio of most- to least-stretched edge.

    Edge stretch is the Euclidean edge length divided by the length the edge
    would have at constant radial depth (angle between the vertex directions
    from the origin times the mean endpoint radius). This cancels the
    lat-long parameterization distortion, so a constant-depth sphere scores
    ratio ~1 everywhere while depth discontinuities blow up.
    """
    tri = vertices[faces]
    radii = np.linalg.norm(tri, axis=2)
    dirs = tri / np.maximum(radii, 1e-300)[..., None]
    ratios = np.zeros(len(faces))
    stretches = []
    for a, b in ((0, 1), (1, 2), (2, 0)):
        chord = np.linalg.norm(tri[:, a] - tri[:, b], axis=1)
        cosang = np.clip(np.einsum("fk,fk->f", dirs[:, a], dirs[:, b]), -1.0, 1.0)
        ang = np.arccos(cosang)
        expected = ang * 0.5 * (radii[:, a] + radii[:, b])
        stretches.append(chord / np.maximum(expected, 1e-300))
    s = np.stack(stretches, axis=1)
    ratios = s.max(axis=1) / np.maximum(s.min(axis=1), 1e-300)
    return ratios


def build_panoramic_mesh(
    pano_depth: DepthMap, rows: int, cols: int, ratio_threshold: float = 10.0
) -> TriangleMesh:
    """Triangulate ERP depth on a rows x cols spherical grid.

    Vertices sit at direction(lon, lat) * depth sampled at the grid node
    (nearest ERP pixel); latitudes are row centers so the poles are never
    touched. Each grid cell yields two triangles with azimuthal wrap-around,
    wound so normals face the panorama center. Faces touching an invalid
    depth sample are dropped. Face flags mark stretch ratios above
    ``ratio_threshold``.
    """
    if rows < 2 or cols < 3:
        raise InputError("panoramic mesh needs rows >= 2 and cols >= 3")
    if pano_depth.width != 2 * pano_depth.height:
        raise InputError("ERP depth must have width = 2*height")
    if not np.any(pano_depth.valid):
        raise InputError("panoramic depth has no valid pixels")
    lon = ((np.arange(cols) + 0.5) / cols - 0.5) * 2.0 * np.pi
    lat = (0.5 - (np.arange(rows) + 0.5) / rows) * np.pi
    lon_g, lat_g = np.meshgrid(lon, lat)
    dirs = lonlat_to_direction(lon_g, lat_g)

    w, h = pano_depth.width, pano_depth.height
    iu = np.mod(np.floor((lon_g / (2 * np.pi) + 0.5) * w).astype(np.int64), w)
    iv = np.clip(np.floor((0.5 - lat_g / np.pi) * h).astype(np.int64), 0, h - 1)
    d = pano_depth.values[iv, iu]
    v_ok = pano_depth.valid[iv, iu]

    verts = dirs * np.where(v_ok, d, 1.0)[..., None]
    verts = verts.reshape(-1, 3)
    vid = np.arange(rows * cols).reshape(rows, cols)

    r_idx, c_idx = np.meshgrid(np.arange(rows - 1), np.arange(cols), indexing="ij")
    a = vid[r_idx, c_idx]
    b = vid[r_idx, (c_idx + 1) % cols]
    c = vid[r_idx + 1, c_idx]
    dd = vid[r_idx + 1, (c_idx + 1) % cols]
    f1 = np.stack([a, b, c], axis=-1).reshape(-1, 3)
    f2 = np.stack([b, dd, c], axis=-1).reshape(-1, 3)
    faces = np.empty((2 * len(f1), 3), dtype=np.int64)
    faces[0::2] = f1
    faces[1::2] = f2

    ok_flat = v_ok.reshape(-1)
    keep = ok_flat[faces].all(axis=1)
    faces = faces[keep]
    flags = stretch_edge_ratios(verts, faces) > ratio_threshold
    return TriangleMesh(vertices=verts, faces=faces, face_flags=flags)
