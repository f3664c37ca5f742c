"""Equirectangular panoramas: spherical mapping, perspective views, seam blending.

ERP mapping (world frame, +z up, panorama centered at the origin):

* longitude lambda in [-pi, pi), measured from +x toward +y,
  u = (lambda / 2pi + 0.5) * W
* latitude phi in [-pi/2, +pi/2], +pi/2 at the top row,
  v = (0.5 - phi / pi) * H
* direction(lambda, phi) = (cos phi cos lambda, cos phi sin lambda, sin phi)

Continuous image coordinates follow the pixel-center convention: integer
pixel (u, v) has its center at (u + 0.5, v + 0.5).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError
from .camera import Camera, DepthMap
from .pointcloud import PointCloud


@dataclass
class PanoramaImage:
    """RGB equirectangular image, width = 2 * height, values in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3 or self.values.shape[2] != 3:
            raise InputError("panorama must have shape (H, W, 3)")
        h, w = self.values.shape[:2]
        if w != 2 * h:
            raise InputError(f"ERP requires width = 2*height, got {w}x{h}")
        if not np.all(np.isfinite(self.values)):
            raise InputError("panorama values must be finite")
        if self.values.min() < -1e-9 or self.values.max() > 1 + 1e-9:
            raise InputError("panorama values must lie in [0, 1]")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


def lonlat_to_direction(lon, lat):
    lon = np.asarray(lon, dtype=np.float64)
    lat = np.asarray(lat, dtype=np.float64)
    cl = np.cos(lat)
    return np.stack([cl * np.cos(lon), cl * np.sin(lon), np.sin(lat)], axis=-1)


def direction_to_lonlat(dirs):
    d = np.asarray(dirs, dtype=np.float64)
    n = np.linalg.norm(d, axis=-1)
    lon = np.arctan2(d[..., 1], d[..., 0])
    lat = np.arcsin(np.clip(d[..., 2] / np.maximum(n, 1e-300), -1.0, 1.0))
    return lon, lat


def erp_pixel_lonlat(width: int, height: int):
    """Longitude/latitude of every ERP pixel center."""
    lon = ((np.arange(width) + 0.5) / width - 0.5) * 2.0 * np.pi
    lat = (0.5 - (np.arange(height) + 0.5) / height) * np.pi
    return np.meshgrid(lon, lat)


def sample_erp(values: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Bilinear ERP lookup along unit (or any nonzero) direction vectors.

    Wraps in longitude, clamps in latitude. ``values`` is (H, W) or (H, W, C);
    ``dirs`` is (..., 3). Returns samples with the leading shape of ``dirs``.
    """
    h, w = values.shape[:2]
    lon, lat = direction_to_lonlat(dirs)
    uc = (lon / (2.0 * np.pi) + 0.5) * w
    vc = (0.5 - lat / np.pi) * h
    fu = uc - 0.5
    fv = np.clip(vc - 0.5, 0.0, h - 1.0)
    u0 = np.floor(fu).astype(np.int64)
    v0 = np.floor(fv).astype(np.int64)
    au = fu - u0
    av = fv - v0
    u0m = np.mod(u0, w)
    u1m = np.mod(u0 + 1, w)
    v1 = np.minimum(v0 + 1, h - 1)
    if values.ndim == 2:
        vals = values[..., None]
    else:
        vals = values
    out = (
        vals[v0, u0m] * ((1 - au) * (1 - av))[..., None]
        + vals[v0, u1m] * (au * (1 - av))[..., None]
        + vals[v1, u0m] * ((1 - au) * av)[..., None]
        + vals[v1, u1m] * (au * av)[..., None]
    )
    return out[..., 0] if values.ndim == 2 else out


def sample_erp_nearest(values: np.ndarray, valid: np.ndarray, dirs: np.ndarray):
    """Nearest-pixel ERP lookup; returns (samples, validity)."""
    h, w = values.shape[:2]
    lon, lat = direction_to_lonlat(dirs)
    u = np.mod(np.floor((lon / (2.0 * np.pi) + 0.5) * w).astype(np.int64), w)
    v = np.clip(np.floor((0.5 - lat / np.pi) * h).astype(np.int64), 0, h - 1)
    return values[v, u], valid[v, u]


def perspective_camera(
    yaw: float, pitch: float, fov_x: float, width: int, height: int
) -> Camera:
    """Pinhole camera looking along direction(yaw, pitch) from the origin."""
    if not (0.0 < fov_x < np.pi):
        raise InputError(f"fov_x must lie in (0, pi), got {fov_x}")
    fx = (width / 2.0) / np.tan(fov_x / 2.0)
    fwd = lonlat_to_direction(yaw, pitch)
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(fwd, up)
    rn = np.linalg.norm(right)
    if rn < 1e-9:
        right = np.cross(fwd, np.array([1.0, 0.0, 0.0]))
        rn = np.linalg.norm(right)
    right = right / rn
    down = np.cross(fwd, right)
    rot = np.stack([right, down, fwd], axis=1)
    return Camera(
        fx=fx,
        fy=fx,
        cx=width / 2.0,
        cy=height / 2.0,
        width=width,
        height=height,
        rotation=rot,
        translation=np.zeros(3),
    )


def erp_to_perspective(
    pano: PanoramaImage,
    yaw: float,
    pitch: float,
    fov_x: float,
    out_size,
):
    """Extract a pinhole view from an ERP panorama.

    ``out_size`` is one int (square) or (width, height). Returns the sampled
    image and the Camera that encodes the synthesized intrinsics and rotation.
    """
    if isinstance(out_size, (tuple, list)):
        out_w, out_h = int(out_size[0]), int(out_size[1])
    else:
        out_w = out_h = int(out_size)
    cam = perspective_camera(yaw, pitch, fov_x, out_w, out_h)
    dirs_cam = cam.pixel_rays()
    dirs_world = dirs_cam @ cam.rotation.T
    image = sample_erp(pano.values, dirs_world)
    return image, cam


def erp_seam_blend(pano: PanoramaImage, band: int) -> PanoramaImage:
    """Harmonize the left/right wrap-around seam by linear pixel blending.

    The seam jump delta = col(0) - col(W-1) is distributed across ``band``
    columns on each side with linearly decaying weights, so after blending
    col(0) == col(W-1) and the correction fades to zero ``band`` columns away
    from the seam. An already periodic panorama is unchanged.
    """
    w = pano.width
    if band < 0 or band >= w // 4:
        raise InputError(f"band must satisfy 0 <= band < width/4, got {band}")
    out = pano.values.copy()
    if band == 0:
        return PanoramaImage(values=out)
    delta = pano.values[:, 0, :] - pano.values[:, w - 1, :]
    for j in range(band):
        weight = (band - j) / (2.0 * band)
        out[:, j, :] -= delta * weight
        out[:, w - 1 - j, :] += delta * weight
    np.clip(out, 0.0, 1.0, out=out)
    return PanoramaImage(values=out)


def erp_backproject(
    depth: DepthMap, colors: np.ndarray | None = None, skip: np.ndarray | None = None
) -> PointCloud:
    """Lift an ERP depth map (radial meters) to a world-space point cloud.

    ``skip`` marks extra pixels to drop (e.g. edge floaters or sky).
    """
    if depth.width != 2 * depth.height:
        raise InputError("ERP depth must have width = 2*height")
    lon, lat = erp_pixel_lonlat(depth.width, depth.height)
    dirs = lonlat_to_direction(lon, lat)
    mask = depth.valid.copy()
    if skip is not None:
        mask &= ~np.asarray(skip, dtype=bool)
    pts = dirs[mask] * depth.values[mask][:, None]
    col = None
    if colors is not None:
        colors = np.asarray(colors, dtype=np.float64)
        if colors.shape[:2] != (depth.height, depth.width):
            raise InputError("color image dimensions differ from the ERP depth")
        col = colors[mask]
    return PointCloud(positions=pts, colors=col)
