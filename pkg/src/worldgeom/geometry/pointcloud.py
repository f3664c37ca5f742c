"""World-space point clouds: merging and voxel downsampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError


@dataclass
class PointCloud:
    positions: np.ndarray
    colors: np.ndarray | None = None
    normals: np.ndarray | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(self.positions)):
            raise InputError("point positions must be finite")
        n = len(self.positions)
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
            if len(self.colors) != n:
                raise InputError("colors length differs from positions")
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if len(self.normals) != n:
                raise InputError("normals length differs from positions")

    def __len__(self) -> int:
        return len(self.positions)

    def bounds(self):
        """(min, max) corners of the axis-aligned bounding box."""
        if len(self) == 0:
            raise InputError("bounding box of an empty point cloud")
        return self.positions.min(axis=0), self.positions.max(axis=0)


def merge_pointclouds(reference: PointCloud, extras: list[PointCloud]) -> PointCloud:
    """Concatenate [reference, *extras] preserving row order.

    Optional attributes survive only when present on every input.
    """
    clouds = [reference] + list(extras)
    positions = np.concatenate([c.positions for c in clouds], axis=0)
    colors = None
    normals = None
    if all(c.colors is not None for c in clouds):
        colors = np.concatenate([c.colors for c in clouds], axis=0)
    if all(c.normals is not None for c in clouds):
        normals = np.concatenate([c.normals for c in clouds], axis=0)
    return PointCloud(positions=positions, colors=colors, normals=normals)


def voxel_downsample(pc: PointCloud, voxel: float) -> PointCloud:
    """Collapse every occupied voxel to the centroid of its member points.

    Colors and normals are averaged per voxel; normals are renormalized.
    Output order is the lexicographic order of voxel indices, which makes the
    operation deterministic regardless of input ordering.
    """
    if voxel <= 0:
        raise InputError(f"voxel size must be positive, got {voxel}")
    if len(pc) == 0:
        return PointCloud(positions=np.zeros((0, 3)))
    idx = np.floor(pc.positions / voxel).astype(np.int64)
    order = np.lexsort((idx[:, 2], idx[:, 1], idx[:, 0]))
    idx_sorted = idx[order]
    new_group = np.ones(len(idx_sorted), dtype=bool)
    if len(idx_sorted) > 1:
        new_group[1:] = np.any(idx_sorted[1:] != idx_sorted[:-1], axis=1)
    group = np.cumsum(new_group) - 1
    n_vox = int(group[-1]) + 1
    counts = np.bincount(group, minlength=n_vox)

    def reduce_mean(arr):
        sums = np.zeros((n_vox, arr.shape[1]))
        np.add.at(sums, group, arr[order])
        return sums / counts[:, None]

    positions = reduce_mean(pc.positions)
    colors = reduce_mean(pc.colors) if pc.colors is not None else None
    normals = None
    if pc.normals is not None:
        normals = reduce_mean(pc.normals)
        ln = np.linalg.norm(normals, axis=1)
        ln[ln < 1e-12] = 1.0
        normals = normals / ln[:, None]
    return PointCloud(positions=positions, colors=colors, normals=normals)
