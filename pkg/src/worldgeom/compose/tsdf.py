"""Truncated signed distance fusion and marching-cubes mesh extraction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from skimage import measure

from ..errors import InputError
from ..geometry.camera import Camera, DepthMap
from ..geometry.mesh import TriangleMesh


@dataclass
class TSDFVolume:
    origin: np.ndarray  # (3,) world position of voxel (0,0,0) center
    voxel_size: float
    truncation: float
    dims: tuple  # (nx, ny, nz)
    sdf: np.ndarray = field(default=None)
    weight: np.ndarray = field(default=None)
    color: np.ndarray = field(default=None)

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        if self.voxel_size <= 0 or self.truncation <= 0:
            raise InputError("voxel size and truncation must be positive")
        nx, ny, nz = self.dims
        if self.sdf is None:
            self.sdf = np.zeros((nx, ny, nz), dtype=np.float64)
        if self.weight is None:
            self.weight = np.zeros((nx, ny, nz), dtype=np.float64)
        if self.color is None:
            self.color = np.zeros((nx, ny, nz, 3), dtype=np.float64)

    @classmethod
    def from_bounds(
        cls,
        lo,
        hi,
        voxel_size: float,
        truncation: float | None = None,
        inflate: float = 0.05,
    ) -> "TSDFVolume":
        """Volume covering [lo, hi] inflated by a fraction on each side."""
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        span = hi - lo
        lo = lo - inflate * span
        hi = hi + inflate * span
        dims = tuple(int(np.ceil(s / voxel_size)) + 1 for s in (hi - lo))
        return cls(
            origin=lo,
            voxel_size=voxel_size,
            truncation=truncation if truncation is not None else 4.0 * voxel_size,
            dims=dims,
        )

    def voxel_centers(self) -> np.ndarray:
        nx, ny, nz = self.dims
        xs = self.origin[0] + np.arange(nx) * self.voxel_size
        ys = self.origin[1] + np.arange(ny) * self.voxel_size
        zs = self.origin[2] + np.arange(nz) * self.voxel_size
        gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
        return np.stack([gx, gy, gz], axis=-1)

    def fill_sdf(self, values: np.ndarray, weight: float = 1.0) -> None:
        """Load an analytic SDF (clamped to the truncation band)."""
        if values.shape != self.sdf.shape:
            raise InputError("SDF grid shape differs from the volume")
        self.sdf = np.clip(values, -self.truncation, self.truncation)
        self.weight = np.full(self.sdf.shape, weight, dtype=np.float64)


def tsdf_integrate(
    vol: TSDFVolume, depth: DepthMap, color: np.ndarray | None, cam: Camera
) -> None:
    """Projective TSDF update from one depth frame (in place).

    Every voxel projecting to a valid pixel with sdf >= -truncation receives
    the clamped signed distance with weight 1 (running weighted mean);
    colors accumulate the same way.
    """
    centers = vol.voxel_centers().reshape(-1, 3)
    pc = cam.world_to_camera(centers)
    z = pc[:, 2]
    front = z > 1e-9
    if not np.any(front):
        return
    u = np.full(len(pc), -1.0)
    v = np.full(len(pc), -1.0)
    u[front] = cam.fx * pc[front, 0] / z[front] + cam.cx
    v[front] = cam.fy * pc[front, 1] / z[front] + cam.cy
    iu = np.floor(u).astype(np.int64)
    iv = np.floor(v).astype(np.int64)
    inside = front & (iu >= 0) & (iu < cam.width) & (iv >= 0) & (iv < cam.height)
    if not np.any(inside):
        return
    pix_ok = np.zeros(len(pc), dtype=bool)
    pix_ok[inside] = depth.valid[iv[inside], iu[inside]]
    d_pix = np.zeros(len(pc))
    d_pix[pix_ok] = depth.values[iv[pix_ok], iu[pix_ok]]
    sdf_new = d_pix - z
    update = pix_ok & (sdf_new >= -vol.truncation)
    if not np.any(update):
        return
    tsdf_val = np.clip(sdf_new[update], -vol.truncation, vol.truncation)

    flat_sdf = vol.sdf.reshape(-1)
    flat_w = vol.weight.reshape(-1)
    idx = np.nonzero(update)[0]
    w_old = flat_w[idx]
    w_new = w_old + 1.0
    flat_sdf[idx] = (flat_sdf[idx] * w_old + tsdf_val) / w_new
    flat_w[idx] = w_new
    if color is not None:
        color = np.asarray(color, dtype=np.float64)
        if color.shape[:2] != (cam.height, cam.width):
            raise InputError("color image dimensions differ from the camera")
        c_pix = color[iv[idx], iu[idx]]
        flat_c = vol.color.reshape(-1, 3)
        flat_c[idx] = (flat_c[idx] * w_old[:, None] + c_pix) / w_new[:, None]


def _face_components(faces: np.ndarray, n_vertices: int) -> np.ndarray:
    """Label faces by connectivity through shared vertices (union-find)."""
    parent = np.arange(n_vertices, dtype=np.int64)

    def find(a):
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    for f in faces:
        r0 = find(f[0])
        r1 = find(f[1])
        r2 = find(f[2])
        parent[r1] = r0
        parent[find(r2)] = find(r0)
    roots = np.array([find(v) for v in faces[:, 0]])
    _, labels = np.unique(roots, return_inverse=True)
    return labels


def extract_mesh(
    vol: TSDFVolume,
    min_component_faces: int = 0,
    simplify_target_faces: int | None = None,
) -> TriangleMesh:
    """Marching cubes over the zero level set of the fused volume.

    Only cells whose eight corners carry weight are marched, which avoids
    phantom walls between observed and unseen space. Components smaller than
    ``min_component_faces`` are dropped; an optional shortest-edge collapse
    reduces the mesh toward a face budget.
    """
    observed = vol.weight > 0
    if not np.any(observed):
        raise InputError("volume has no integrated observations")
    values = np.where(observed, vol.sdf, vol.truncation)
    try:
        verts, faces, _, _ = measure.marching_cubes(
            values, level=0.0, spacing=(vol.voxel_size,) * 3, mask=observed
        )
    except (ValueError, RuntimeError):
        return TriangleMesh(vertices=np.zeros((0, 3)), faces=np.zeros((0, 3), dtype=np.int64))
    if len(faces) == 0:
        return TriangleMesh(vertices=np.zeros((0, 3)), faces=np.zeros((0, 3), dtype=np.int64))
    verts = verts + vol.origin[None, :]
    faces = faces.astype(np.int64)

    if min_component_faces > 0:
        labels = _face_components(faces, len(verts))
        sizes = np.bincount(labels)
        keep = sizes[labels] >= min_component_faces
        faces = faces[keep]

    used = np.unique(faces.reshape(-1))
    remap = np.full(len(verts), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    verts_out = verts[used]
    faces_out = remap[faces]

    colors = None
    if np.any(vol.color != 0):
        gi = np.clip(
            np.round((verts_out - vol.origin[None, :]) / vol.voxel_size).astype(np.int64),
            0,
            np.array(vol.dims) - 1,
        )
        colors = vol.color[gi[:, 0], gi[:, 1], gi[:, 2]]

    mesh = TriangleMesh(vertices=verts_out, faces=faces_out, vertex_colors=colors)
    if simplify_target_faces is not None and mesh.n_faces > simplify_target_faces:
        mesh = _collapse_edges(mesh, simplify_target_faces)
    return mesh


def _collapse_edges(mesh: TriangleMesh, target_faces: int) -> TriangleMesh:
    """Greedy shortest-edge collapse until the face budget is met.

    Each pass merges the shortest remaining edges (midpoint placement),
    drops degenerate faces, and repeats; collapses that would weld already
    merged vertices in the same pass are skipped.
    """
    verts = mesh.vertices.copy()
    faces = mesh.faces.copy()
    colors = mesh.vertex_colors.copy() if mesh.vertex_colors is not None else None
    while len(faces) > target_faces:
        edges = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
        edges = np.sort(edges, axis=1)
        edges = np.unique(edges, axis=0)
        lengths = np.linalg.norm(verts[edges[:, 0]] - verts[edges[:, 1]], axis=1)
        order = np.argsort(lengths, kind="stable")
        budget = max(1, (len(faces) - target_faces) // 2)
        touched = np.zeros(len(verts), dtype=bool)
        merge_to = np.arange(len(verts), dtype=np.int64)
        merged = 0
        for e in order:
            a, b = edges[e]
            if touched[a] or touched[b]:
                continue
            verts[a] = 0.5 * (verts[a] + verts[b])
            if colors is not None:
                colors[a] = 0.5 * (colors[a] + colors[b])
            merge_to[b] = a
            touched[a] = touched[b] = True
            merged += 1
            if merged >= budget:
                break
        if merged == 0:
            break
        faces = merge_to[faces]
        good = (
            (faces[:, 0] != faces[:, 1])
            & (faces[:, 1] != faces[:, 2])
            & (faces[:, 0] != faces[:, 2])
        )
        faces = faces[good]
        if len(faces) == 0:
            break
    used = np.unique(faces.reshape(-1)) if len(faces) else np.zeros(0, dtype=np.int64)
    remap = np.full(len(verts), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return TriangleMesh(
        vertices=verts[used],
        faces=remap[faces] if len(faces) else np.zeros((0, 3), dtype=np.int64),
        vertex_colors=colors[used] if colors is not None else None,
    )
