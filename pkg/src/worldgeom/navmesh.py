"""Grid navigation mesh over scene geometry plus Dijkstra reachability.

A NavMesh is a horizontal grid of walkable cells rasterized from the scene
mesh: a cell is walkable when a downward ray finds an up-facing surface
(slope within limit) with enough clearance above it. Adjacency is
8-connected, limited by step height, and requires torso-height line of
sight between neighbor centers so thin vertical walls separate cells even
though they are invisible to purely vertical ground rays.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import InputError
from .geometry.mesh import RaycastScene, TriangleMesh

STEP_FRACTION = 0.3  # max step height as a fraction of agent height
LOS_FRACTION = 0.5  # torso height (line-of-sight checks) as a fraction


@dataclass
class NavMesh:
    centers: np.ndarray  # (N, 3) cell centers, z on the ground
    ij: np.ndarray  # (N, 2) integer grid coordinates
    adjacency: list  # per-cell sorted neighbor indices (includes bridges)
    cell_size: float
    origin: np.ndarray  # (2,) grid anchor: world xy of grid corner (0, 0)
    agent_height: float = 1.6
    bridge_edges: list = field(default_factory=list)  # [(a, b), ...]

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.float64).reshape(-1, 3)
        self.ij = np.asarray(self.ij, dtype=np.int64).reshape(-1, 2)
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(2)
        self._lookup = {(int(i), int(j)): k for k, (i, j) in enumerate(self.ij)}

    @property
    def n_cells(self) -> int:
        return len(self.centers)

    def cell_index(self, i: int, j: int):
        return self._lookup.get((int(i), int(j)))

    def cell_at_point(self, x: float, y: float):
        """Index of the walkable cell containing world (x, y), or None."""
        i = int(math.floor((x - self.origin[0]) / self.cell_size))
        j = int(math.floor((y - self.origin[1]) / self.cell_size))
        return self.cell_index(i, j)

    def nearest_cell(self, x: float, y: float) -> int:
        if self.n_cells == 0:
            raise InputError("empty NavMesh has no cells")
        d2 = (self.centers[:, 0] - x) ** 2 + (self.centers[:, 1] - y) ** 2
        return int(np.argmin(d2))

    def components(self) -> np.ndarray:
        """Connected-component label per cell (labels are 0..k-1)."""
        labels = np.full(self.n_cells, -1, dtype=np.int64)
        cur = 0
        for s in range(self.n_cells):
            if labels[s] >= 0:
                continue
            stack = [s]
            labels[s] = cur
            while stack:
                u = stack.pop()
                for v in self.adjacency[u]:
                    if labels[v] < 0:
                        labels[v] = cur
                        stack.append(v)
            cur += 1
        return labels

    def boundary_cells(self) -> np.ndarray:
        """Indices of walkable cells missing at least one of 8 grid neighbors."""
        out = []
        for k, (i, j) in enumerate(self.ij):
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    if di == 0 and dj == 0:
                        continue
                    if (int(i) + di, int(j) + dj) not in self._lookup:
                        out.append(k)
                        break
                else:
                    continue
                break
        return np.asarray(out, dtype=np.int64)

    def to_dict(self) -> dict:
        edges = []
        for a, nbrs in enumerate(self.adjacency):
            for b in nbrs:
                if a < b:
                    edges.append([int(a), int(b)])
        return {
            "cell_size": float(self.cell_size),
            "origin": [float(x) for x in self.origin],
            "cells": [
                {
                    "i": int(self.ij[k, 0]),
                    "j": int(self.ij[k, 1]),
                    "center": [float(x) for x in self.centers[k]],
                }
                for k in range(self.n_cells)
            ],
            "edges": edges,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NavMesh":
        cells = d["cells"]
        centers = np.array([c["center"] for c in cells], dtype=np.float64).reshape(
            -1, 3
        )
        ij = np.array([[c["i"], c["j"]] for c in cells], dtype=np.int64).reshape(-1, 2)
        adjacency = [[] for _ in cells]
        for a, b in d["edges"]:
            adjacency[a].append(int(b))
            adjacency[b].append(int(a))
        adjacency = [sorted(n) for n in adjacency]
        return cls(
            centers=centers,
            ij=ij,
            adjacency=adjacency,
            cell_size=float(d["cell_size"]),
            origin=np.asarray(d["origin"], dtype=np.float64),
        )

    @classmethod
    def from_grid(
        cls,
        walkable_ij,
        cell_size: float,
        origin=(0.0, 0.0),
        heights=None,
        agent_height: float = 1.6,
    ) -> "NavMesh":
        """Build a NavMesh directly from grid data (no mesh, no raycasts).

        Intended for synthetic tests and oracles; adjacency applies the
        8-connectivity and step-height rules only.
        """
        ij = np.asarray(sorted(map(tuple, walkable_ij)), dtype=np.int64).reshape(-1, 2)
        origin = np.asarray(origin, dtype=np.float64)
        if heights is None:
            z = np.zeros(len(ij))
        else:
            z = np.asarray(heights, dtype=np.float64).reshape(-1)
        centers = np.stack(
            [
                origin[0] + (ij[:, 0] + 0.5) * cell_size,
                origin[1] + (ij[:, 1] + 0.5) * cell_size,
                z,
            ],
            axis=1,
        )
        nav = cls(
            centers=centers,
            ij=ij,
            adjacency=[[] for _ in range(len(ij))],
            cell_size=cell_size,
            origin=origin,
            agent_height=agent_height,
        )
        nav.adjacency = _grid_adjacency(nav, None)
        return nav


def _grid_adjacency(nav: NavMesh, scene: RaycastScene | None) -> list:
    """8-connected adjacency with step-height and optional line-of-sight."""
    step_max = STEP_FRACTION * nav.agent_height
    pairs = []
    for k in range(nav.n_cells):
        i, j = int(nav.ij[k, 0]), int(nav.ij[k, 1])
        for di, dj in ((1, -1), (1, 0), (1, 1), (0, 1)):
            m = nav.cell_index(i + di, j + dj)
            if m is None:
                continue
            if abs(nav.centers[k, 2] - nav.centers[m, 2]) <= step_max:
                pairs.append((k, m))
    if scene is not None and pairs:
        lift = np.array([0.0, 0.0, LOS_FRACTION * nav.agent_height])
        a = nav.centers[[p[0] for p in pairs]] + lift
        b = nav.centers[[p[1] for p in pairs]] + lift
        clear = scene.segments_clear(a, b)
        pairs = [p for p, c in zip(pairs, clear) if c]
    adjacency = [[] for _ in range(nav.n_cells)]
    for k, m in pairs:
        adjacency[k].append(m)
        adjacency[m].append(k)
    return [sorted(n) for n in adjacency]


def _vertical_ground_hits(scene: RaycastScene, xy: np.ndarray, z_start: float):
    """All downward-ray intersections per grid point, sorted top to bottom.

    Returns a list of (t_array, face_array) per input point.
    """
    n = len(xy)
    out = [None] * n
    chunk = 256
    down = np.array([0.0, 0.0, -1.0])
    for s in range(0, n, chunk):
        e = min(s + chunk, n)
        origins = np.concatenate(
            [xy[s:e], np.full((e - s, 1), z_start)], axis=1
        )
        # collect all hits by running nearest-hit queries is insufficient;
        # do the full matrix for this chunk instead
        ts = [[] for _ in range(e - s)]
        fs = [[] for _ in range(e - s)]
        for cs in range(0, scene.n_faces, scene.face_chunk):
            ce = min(cs + scene.face_chunk, scene.n_faces)
            v0 = scene.v0[None, cs:ce]
            e1 = scene.e1[None, cs:ce]
            e2 = scene.e2[None, cs:ce]
            d = down[None, None, :]
            pvec = np.cross(d, e2)
            det = np.einsum("rfk,rfk->rf", np.broadcast_to(e1, pvec.shape), pvec)
            with np.errstate(divide="ignore", invalid="ignore"):
                inv = 1.0 / det
                tvec = origins[:, None, :] - v0
                u = np.einsum("rfk,rfk->rf", tvec, pvec) * inv
                qvec = np.cross(tvec, np.broadcast_to(e1, tvec.shape))
                vv = np.einsum("rfk,rfk->rf", np.broadcast_to(d, qvec.shape), qvec) * inv
                t = np.einsum("rfk,rfk->rf", np.broadcast_to(e2, qvec.shape), qvec) * inv
            eps = 1e-12
            with np.errstate(invalid="ignore"):
                hit = (
                    (np.abs(det) > 1e-14)
                    & (u >= -eps)
                    & (vv >= -eps)
                    & (u + vv <= 1.0 + eps)
                    & (t > 1e-6)
                )
            for r in range(e - s):
                idx = np.nonzero(hit[r])[0]
                if len(idx):
                    ts[r].append(t[r, idx])
                    fs[r].append(idx + cs)
        for r in range(e - s):
            if ts[r]:
                t_all = np.concatenate(ts[r])
                f_all = np.concatenate(fs[r])
                order = np.lexsort((f_all, t_all))
                out[s + r] = (t_all[order], f_all[order])
            else:
                out[s + r] = (np.zeros(0), np.zeros(0, dtype=np.int64))
    return out


def build_navmesh(
    mesh: TriangleMesh,
    cell_size: float,
    agent_height: float = 1.6,
    max_slope: float = math.radians(45.0),
) -> NavMesh:
    """Rasterize walkable ground onto a horizontal grid.

    Ground candidates are scanned top-down along a vertical ray through each
    cell center; the first hit whose oriented face normal is within
    ``max_slope`` of +z and whose headroom (distance to the hit above it, if
    any) is at least ``agent_height`` defines the cell. Meshes must be wound
    so visible surfaces face the scene interior (up-facing floors).
    """
    if cell_size <= 0:
        raise InputError("cell_size must be positive")
    if mesh.n_faces == 0:
        return NavMesh(
            centers=np.zeros((0, 3)),
            ij=np.zeros((0, 2), dtype=np.int64),
            adjacency=[],
            cell_size=cell_size,
            origin=np.zeros(2),
            agent_height=agent_height,
        )
    lo, hi = mesh.bounds()
    origin = lo[:2].copy()
    nx = max(1, int(math.ceil((hi[0] - lo[0]) / cell_size)))
    ny = max(1, int(math.ceil((hi[1] - lo[1]) / cell_size)))
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    ii = ii.reshape(-1)
    jj = jj.reshape(-1)
    xy = np.stack(
        [origin[0] + (ii + 0.5) * cell_size, origin[1] + (jj + 0.5) * cell_size],
        axis=1,
    )
    scene = RaycastScene(mesh)
    z_start = hi[2] + 1.0
    normals = mesh.face_normals()
    cos_max = math.cos(max_slope)
    hits = _vertical_ground_hits(scene, xy, z_start)

    keep_ij = []
    keep_z = []
    for k, (ts, fs) in enumerate(hits):
        if len(ts) > 1:  # merge duplicate hits on shared triangle edges
            uniq = np.concatenate(([True], np.diff(ts) > 1e-7))
            ts, fs = ts[uniq], fs[uniq]
        ground_z = None
        for idx in range(len(ts)):
            if normals[fs[idx]][2] < cos_max:
                continue
            clearance = np.inf if idx == 0 else ts[idx] - ts[idx - 1]
            if clearance >= agent_height:
                ground_z = z_start - ts[idx]
                break
        if ground_z is not None:
            keep_ij.append((int(ii[k]), int(jj[k])))
            keep_z.append(ground_z)
    if not keep_ij:
        return NavMesh(
            centers=np.zeros((0, 3)),
            ij=np.zeros((0, 2), dtype=np.int64),
            adjacency=[],
            cell_size=cell_size,
            origin=origin,
            agent_height=agent_height,
        )
    ij = np.asarray(keep_ij, dtype=np.int64)
    centers = np.stack(
        [
            origin[0] + (ij[:, 0] + 0.5) * cell_size,
            origin[1] + (ij[:, 1] + 0.5) * cell_size,
            np.asarray(keep_z),
        ],
        axis=1,
    )
    nav = NavMesh(
        centers=centers,
        ij=ij,
        adjacency=[[] for _ in range(len(ij))],
        cell_size=cell_size,
        origin=origin,
        agent_height=agent_height,
    )
    nav.adjacency = _grid_adjacency(nav, scene)
    return nav


def refine_navmesh(
    nav: NavMesh,
    mesh: TriangleMesh,
    erosion_radius: float,
    bridge_gap: float = 0.5,
    require_visibility: bool = True,
) -> NavMesh:
    """Ground re-snapping, boundary erosion, island bridging (in that order).

    1. Every cell center is re-snapped to the nearest downward ground hit.
    2. Cells whose centers lie within ``erosion_radius`` of any non-walkable
       grid position (occupancy-grid erosion) are removed.
    3. Component pairs whose nearest boundary cells are within ``bridge_gap``
       and mutually visible gain a single bridging edge.
    """
    if erosion_radius < 0:
        raise InputError("erosion_radius must be >= 0")
    if nav.n_cells == 0:
        return nav
    scene = RaycastScene(mesh)

    # stage 1: snap to ground
    lift = 0.5 * nav.agent_height
    origins = nav.centers + np.array([0.0, 0.0, lift])
    dirs = np.tile(np.array([[0.0, 0.0, -1.0]]), (nav.n_cells, 1))
    t, f, _, _ = scene.raycast_batch(origins, dirs, t_min=1e-6)
    snapped = nav.centers.copy()
    hit = f >= 0
    snapped[hit, 2] = origins[hit, 2] - t[hit]

    # stage 2: occupancy-grid erosion
    keep = np.ones(nav.n_cells, dtype=bool)
    if erosion_radius > 0:
        r_cells = int(math.floor(erosion_radius / nav.cell_size + 1e-9))
        i0, j0 = nav.ij.min(axis=0)
        gi = nav.ij[:, 0] - i0
        gj = nav.ij[:, 1] - j0
        grid = np.zeros((gi.max() + 1, gj.max() + 1), dtype=bool)
        grid[gi, gj] = True
        span = np.arange(-r_cells, r_cells + 1)
        di, dj = np.meshgrid(span, span, indexing="ij")
        structure = (np.hypot(di, dj) * nav.cell_size) <= erosion_radius + 1e-12
        eroded = ndimage.binary_erosion(grid, structure=structure, border_value=0)
        keep = eroded[gi, gj]
    idx_map = np.full(nav.n_cells, -1, dtype=np.int64)
    idx_map[keep] = np.arange(int(keep.sum()))
    new = NavMesh(
        centers=snapped[keep],
        ij=nav.ij[keep],
        adjacency=[[] for _ in range(int(keep.sum()))],
        cell_size=nav.cell_size,
        origin=nav.origin,
        agent_height=nav.agent_height,
    )
    for a, nbrs in enumerate(nav.adjacency):
        if not keep[a]:
            continue
        na = idx_map[a]
        for b in nbrs:
            if keep[b]:
                new.adjacency[na].append(int(idx_map[b]))
    new.adjacency = [sorted(set(n)) for n in new.adjacency]

    # stage 3: bridge nearby, mutually visible islands. The gap between two
    # cells is measured between their footprints (center distance minus one
    # cell extent), not between centers, so a physical 0.4 m gap bridged at
    # bridge_gap 0.5 works regardless of grid alignment.
    labels = new.components()
    n_comp = labels.max() + 1 if new.n_cells else 0
    if n_comp > 1 and bridge_gap > 0:
        boundary = new.boundary_cells()
        if len(boundary) == 0:
            boundary = np.arange(new.n_cells)
        lift_v = np.array([0.0, 0.0, 0.1])
        for ca in range(n_comp):
            for cb in range(ca + 1, n_comp):
                ba = boundary[labels[boundary] == ca]
                bb = boundary[labels[boundary] == cb]
                if len(ba) == 0 or len(bb) == 0:
                    continue
                diff = new.centers[ba][:, None, :] - new.centers[bb][None, :, :]
                d_xy = np.linalg.norm(diff[:, :, :2], axis=2)
                gap_xy = np.maximum(d_xy - new.cell_size, 0.0)
                dist = np.hypot(gap_xy, diff[:, :, 2])
                order = np.argsort(dist, axis=None, kind="stable")
                added = False
                for flat in order:
                    if added:
                        break
                    qa, qb = np.unravel_index(flat, dist.shape)
                    if dist[qa, qb] > bridge_gap:
                        break
                    a_idx, b_idx = int(ba[qa]), int(bb[qb])
                    if require_visibility and not scene.segment_clear(
                        new.centers[a_idx] + lift_v, new.centers[b_idx] + lift_v
                    ):
                        continue
                    new.adjacency[a_idx] = sorted(new.adjacency[a_idx] + [b_idx])
                    new.adjacency[b_idx] = sorted(new.adjacency[b_idx] + [a_idx])
                    new.bridge_edges.append((a_idx, b_idx))
                    added = True
    return new


@dataclass
class DistanceField:
    source: int
    distance: np.ndarray  # (N,) geodesic meters, +inf when unreachable
    predecessor: np.ndarray  # (N,) previous cell on shortest path, -1 = none


def dijkstra_field(nav: NavMesh, source: int) -> DistanceField:
    """Exact single-source shortest distances with Euclidean edge weights.

    Predecessor ties at equal distance resolve to the lower cell index.
    """
    if source < 0 or source >= nav.n_cells:
        raise InputError(f"source cell {source} out of range")
    n = nav.n_cells
    dist = np.full(n, np.inf)
    pred = np.full(n, -1, dtype=np.int64)
    dist[source] = 0.0
    heap = [(0.0, source)]
    done = np.zeros(n, dtype=bool)
    while heap:
        d, u = heapq.heappop(heap)
        if done[u] or d > dist[u]:
            continue
        done[u] = True
        cu = nav.centers[u]
        for v in nav.adjacency[u]:
            w = float(np.linalg.norm(cu - nav.centers[v]))
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                pred[v] = u
                heapq.heappush(heap, (nd, v))
            elif nd == dist[v] and u < pred[v]:
                pred[v] = u
    return DistanceField(source=source, distance=dist, predecessor=pred)


def shortest_path(field: DistanceField, nav: NavMesh, target: int) -> list:
    """Cell centers from the source to ``target``; empty when unreachable."""
    if target < 0 or target >= nav.n_cells:
        raise InputError(f"target cell {target} out of range")
    if not np.isfinite(field.distance[target]):
        return []
    chain = [target]
    u = target
    while u != field.source:
        u = int(field.predecessor[u])
        if u < 0:
            return []
        chain.append(u)
    chain.reverse()
    return [nav.centers[k].copy() for k in chain]
