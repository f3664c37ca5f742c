"""Pinhole cameras, depth maps, normal maps, and the conversions between them.

Conventions used throughout the toolkit:

* World frame: right-handed, +z up. The panorama center sits at the world
  origin unless stated otherwise.
* Camera frame: x right, y down, z forward (the usual CV pinhole frame).
  ``rotation`` maps camera vectors to world vectors; ``translation`` is the
  camera center in world coordinates.
* Integer pixel (u, v) denotes the pixel whose center lies at the continuous
  image position (u + 0.5, v + 0.5).
* Depth is the camera-frame z coordinate in meters (not ray length).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InputError

_ROT_TOL = 1e-6


@dataclass
class Camera:
    """Pinhole intrinsics plus a rigid camera-to-world pose."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if self.fx <= 0 or self.fy <= 0:
            raise InputError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width < 1 or self.height < 1:
            raise InputError(f"image size must be >= 1, got {self.width}x{self.height}")
        if not np.allclose(self.rotation.T @ self.rotation, np.eye(3), atol=_ROT_TOL):
            raise InputError("rotation is not orthonormal")
        if abs(np.linalg.det(self.rotation) - 1.0) > _ROT_TOL:
            raise InputError("rotation must have determinant +1")

    @property
    def intrinsics(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def pixel_rays(self) -> np.ndarray:
        """Camera-frame ray directions through every pixel center, shape (H, W, 3).

        Not normalized: z component is exactly 1, so multiplying by depth
        gives the camera-frame point directly.
        """
        u = (np.arange(self.width) + 0.5 - self.cx) / self.fx
        v = (np.arange(self.height) + 0.5 - self.cy) / self.fy
        uu, vv = np.meshgrid(u, v)
        return np.stack([uu, vv, np.ones_like(uu)], axis=-1)

    def camera_to_world(self, pts: np.ndarray) -> np.ndarray:
        return pts @ self.rotation.T + self.translation

    def world_to_camera(self, pts: np.ndarray) -> np.ndarray:
        return (pts - self.translation) @ self.rotation

    def project(self, pts_world: np.ndarray):
        """Project world points; returns (uv continuous coords, camera z)."""
        pc = self.world_to_camera(np.atleast_2d(pts_world))
        z = pc[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * pc[:, 0] / z + self.cx
            v = self.fy * pc[:, 1] / z + self.cy
        return np.stack([u, v], axis=-1), z

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
            "rotation": [float(x) for x in self.rotation.reshape(-1)],
            "translation": [float(x) for x in self.translation],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
            rotation=np.asarray(d["rotation"], dtype=np.float64).reshape(3, 3),
            translation=np.asarray(d["translation"], dtype=np.float64),
        )


def look_at_rotation(eye: np.ndarray, target: np.ndarray, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera-to-world rotation for a camera at ``eye`` looking at ``target``.

    Columns are the world-frame directions of the camera x (right),
    y (down), z (forward) axes. Falls back to +x as the up hint when the
    view direction is parallel to ``up``.
    """
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    fwd = target - eye
    n = np.linalg.norm(fwd)
    if n < 1e-12:
        raise InputError("look-at target coincides with the eye position")
    fwd = fwd / n
    up = np.asarray(up, dtype=np.float64)
    right = np.cross(fwd, up)
    rn = np.linalg.norm(right)
    if rn < 1e-8:
        right = np.cross(fwd, np.array([1.0, 0.0, 0.0]))
        rn = np.linalg.norm(right)
    right = right / rn
    down = np.cross(fwd, right)
    return np.stack([right, down, fwd], axis=1)


@dataclass
class DepthMap:
    """Per-pixel metric depth with a validity mask."""

    values: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise InputError("depth values must be a 2-D array")
        if self.valid is None:
            self.valid = np.isfinite(self.values) & (self.values > 0)
        else:
            self.valid = np.asarray(self.valid, dtype=bool)
            if self.valid.shape != self.values.shape:
                raise InputError("valid mask shape differs from depth values")
        if np.any(self.values[self.valid] <= 0) or not np.all(
            np.isfinite(self.values[self.valid])
        ):
            raise InputError("valid depth pixels must be finite and positive")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass
class NormalMap:
    """Per-pixel unit normals (camera frame) with a validity mask."""

    vectors: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 3 or self.vectors.shape[2] != 3:
            raise InputError("normal vectors must have shape (H, W, 3)")
        if self.valid is None:
            norms = np.linalg.norm(self.vectors, axis=-1)
            self.valid = np.isfinite(norms) & (np.abs(norms - 1.0) < 1e-5)
        else:
            self.valid = np.asarray(self.valid, dtype=bool)
            if self.valid.shape != self.vectors.shape[:2]:
                raise InputError("valid mask shape differs from normal map")
        norms = np.linalg.norm(self.vectors[self.valid], axis=-1)
        if norms.size and np.any(np.abs(norms - 1.0) > 1e-5):
            raise InputError("valid normals must be unit length")

    @property
    def width(self) -> int:
        return self.vectors.shape[1]

    @property
    def height(self) -> int:
        return self.vectors.shape[0]


def backproject_depth(depth: DepthMap, cam: Camera, colors: np.ndarray | None = None):
    """Lift every valid depth pixel to a world-space point.

    point = rotation @ (depth * K^-1 @ [u+0.5, v+0.5, 1]) + translation.
    Returns a PointCloud with one point per valid pixel, row-major order.
    """
    from .pointcloud import PointCloud

    if depth.width != cam.width or depth.height != cam.height:
        raise InputError(
            f"depth map is {depth.width}x{depth.height} but camera expects "
            f"{cam.width}x{cam.height}"
        )
    rays = cam.pixel_rays()
    mask = depth.valid
    pts_cam = rays[mask] * depth.values[mask][:, None]
    pts = cam.camera_to_world(pts_cam)
    col = None
    if colors is not None:
        colors = np.asarray(colors, dtype=np.float64)
        if colors.shape[:2] != (cam.height, cam.width):
            raise InputError("color image dimensions differ from the depth map")
        col = colors[mask]
    return PointCloud(positions=pts, colors=col)


def render_depth(pc, cam: Camera, splat_radius: int = 1) -> DepthMap:
    """Z-buffer splat of a point cloud into a camera.

    Each point writes a (2r-1)x(2r-1) pixel block centered on the pixel that
    contains its projection; the nearest camera-frame z wins per pixel, ties
    going to the earliest point in the cloud. Pixels that receive no point
    are invalid. An empty cloud yields an all-invalid map.
    """
    if splat_radius < 1:
        raise InputError("splat_radius must be >= 1")
    h, w = cam.height, cam.width
    values = np.full((h, w), np.inf)
    if len(pc) == 0:
        return DepthMap(values=np.ones((h, w)), valid=np.zeros((h, w), dtype=bool))
    uv, z = cam.project(pc.positions)
    front = z > 0
    uv = uv[front]
    z = z[front]
    iu = np.floor(uv[:, 0]).astype(np.int64)
    iv = np.floor(uv[:, 1]).astype(np.int64)
    r = splat_radius - 1
    for dv in range(-r, r + 1):
        for du in range(-r, r + 1):
            u2 = iu + du
            v2 = iv + dv
            ok = (u2 >= 0) & (u2 < w) & (v2 >= 0) & (v2 < h)
            if not np.any(ok):
                continue
            flat = v2[ok] * w + u2[ok]
            # np.minimum.at is order-independent for the min itself; the
            # earliest-point tie rule holds because equal depths give equal
            # stored values.
            np.minimum.at(values.reshape(-1), flat, z[ok])
    valid = np.isfinite(values)
    values = np.where(valid, values, 1.0)
    return DepthMap(values=values, valid=valid)


def depth_to_normal(depth: DepthMap, cam: Camera) -> NormalMap:
    """Derive camera-frame surface normals from depth by finite differences.

    Back-projects the depth map, forms cross products of the four quadrant
    neighbor-difference pairs, aggregates valid quadrant estimates with a
    component-wise median, renormalizes, and orients every normal toward the
    camera (n . ray < 0). Pixels with no valid quadrant are invalid.
    """
    if depth.width != cam.width or depth.height != cam.height:
        raise InputError("depth map dimensions differ from the camera")
    h, w = depth.height, depth.width
    rays = cam.pixel_rays()
    pts = rays * depth.values[..., None]
    vmask = depth.valid

    def shifted(arr, dv, du, fill=np.nan):
        out = np.full_like(arr, fill)
        src_v = slice(max(dv, 0), h + min(dv, 0))
        src_u = slice(max(du, 0), w + min(du, 0))
        dst_v = slice(max(-dv, 0), h + min(-dv, 0))
        dst_u = slice(max(-du, 0), w + min(-du, 0))
        out[dst_v, dst_u] = arr[src_v, src_u]
        return out

    def shifted_mask(dv, du):
        out = np.zeros((h, w), dtype=bool)
        src_v = slice(max(dv, 0), h + min(dv, 0))
        src_u = slice(max(du, 0), w + min(du, 0))
        dst_v = slice(max(-dv, 0), h + min(-dv, 0))
        dst_u = slice(max(-du, 0), w + min(-du, 0))
        out[dst_v, dst_u] = vmask[src_v, src_u]
        return out

    du_pos = shifted(pts, 0, 1) - pts
    du_neg = shifted(pts, 0, -1) - pts
    dv_pos = shifted(pts, 1, 0) - pts
    dv_neg = shifted(pts, -1, 0) - pts
    m_u_pos = shifted_mask(0, 1) & vmask
    m_u_neg = shifted_mask(0, -1) & vmask
    m_v_pos = shifted_mask(1, 0) & vmask
    m_v_neg = shifted_mask(-1, 0) & vmask

    # Four quadrants in consistent rotational order so estimates share a sign.
    quads = [
        (np.cross(du_pos, dv_pos), m_u_pos & m_v_pos),
        (np.cross(dv_pos, du_neg), m_v_pos & m_u_neg),
        (np.cross(du_neg, dv_neg), m_u_neg & m_v_neg),
        (np.cross(dv_neg, du_pos), m_v_neg & m_u_pos),
    ]
    estimates = np.full((4, h, w, 3), np.nan)
    for k, (n, m) in enumerate(quads):
        ln = np.linalg.norm(n, axis=-1)
        ok = m & (ln > 1e-12)
        est = np.full((h, w, 3), np.nan)
        est[ok] = n[ok] / ln[ok][:, None]
        estimates[k] = est

    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=RuntimeWarning)
        med = np.nanmedian(estimates, axis=0)
    any_quad = ~np.all(np.isnan(estimates[:, :, :, 0]), axis=0)
    ln = np.linalg.norm(med, axis=-1)
    valid = any_quad & np.isfinite(ln) & (ln > 1e-12)
    vectors = np.zeros((h, w, 3))
    vectors[valid] = med[valid] / ln[valid][:, None]
    # orient toward the camera: flip where n . viewing ray > 0
    flip = valid & (np.sum(vectors * rays, axis=-1) > 0)
    vectors[flip] = -vectors[flip]
    vectors[~valid] = 0.0
    # re-normalize exactly where valid so the unit invariant holds
    vn = np.linalg.norm(vectors[valid], axis=-1)
    vectors[valid] = vectors[valid] / vn[:, None]
    return NormalMap(vectors=vectors, valid=valid)


def edge_floater_mask(depth: DepthMap, rel_jump: float = 0.2) -> np.ndarray:
    """Boolean mask of pixels that sit on a depth discontinuity.

    A pixel is a floater candidate when the relative depth jump to any valid
    4-neighbor exceeds ``rel_jump`` (jump measured against the nearer of the
    two depths). Invalid pixels are never flagged.
    """
    d = depth.values
    v = depth.valid
    h, w = d.shape
    flag = np.zeros((h, w), dtype=bool)
    for dv, du in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        a_v = slice(max(dv, 0), h + min(dv, 0))
        a_u = slice(max(du, 0), w + min(du, 0))
        b_v = slice(max(-dv, 0), h + min(-dv, 0))
        b_u = slice(max(-du, 0), w + min(-du, 0))
        da, db = d[a_v, a_u], d[b_v, b_u]
        both = v[a_v, a_u] & v[b_v, b_u]
        jump = np.zeros_like(da)
        near = np.minimum(da, db)
        with np.errstate(divide="ignore", invalid="ignore"):
            jump[both] = np.abs(da - db)[both] / near[both]
        big = both & (jump > rel_jump)
        sub = flag[b_v, b_u]
        sub |= big
        flag[b_v, b_u] = sub
    return flag & v
