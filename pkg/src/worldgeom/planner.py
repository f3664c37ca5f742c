"""Trajectory planning over a parsed panoramic scene.

Five trajectory families are generated from the panoramic mesh, the NavMesh,
and the semantic landmarks:

* regular      - orbital sweeps seeded from three 120-degree panorama views
* surrounding  - arcs circling significant landmarks on the NavMesh
* recon_aware  - orbits that stare at under-observed (stretched-face) regions
* wandering    - farthest-reach walks through eight angular sectors
* aerial       - pitched-up variants of surrounding and wandering paths

All camera paths start at the panorama center, are collision-checked by ray
casting against the scene mesh, and respect the per-mode caps
(9, 5, 10, 3, 8; 35 total). Everything is deterministic: ties break to the
lowest index everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .geometry.camera import Camera, DepthMap, look_at_rotation
from .geometry.mesh import RaycastScene, TriangleMesh, stretch_edge_ratios
from .geometry.panorama import lonlat_to_direction, perspective_camera, sample_erp_nearest
from .navmesh import NavMesh, dijkstra_field, shortest_path

MODE_CAPS = {
    "regular": 9,
    "surrounding": 5,
    "recon_aware": 10,
    "wandering": 3,
    "aerial": 8,
}
TOTAL_CAP = 35
MODES = tuple(MODE_CAPS)

_AXIS_DIRS = np.array(
    [
        [1.0, 0, 0],
        [-1.0, 0, 0],
        [0, 1.0, 0],
        [0, -1.0, 0],
        [0, 0, 1.0],
        [0, 0, -1.0],
    ]
)


@dataclass
class PlannerConfig:
    camera_height: float = 1.4  # eye height above NavMesh cells
    clearance_min: float = 0.2  # segment/point raycast clearance
    min_move: float = 0.3  # discard trajectories moving less than this
    max_step: float = 1.5  # cap on consecutive frame spacing
    orbit_step_deg: float = 5.0
    view_fov_x_deg: float = 120.0
    view_probe_size: int = 256
    regular_pitch_deg: float = 45.0
    regular_azimuth_deg: float = 120.0
    regular_extra_azimuth_deg: float = 60.0
    regular_azimuth_extension: bool = True
    orbit_r_min: float = 1.0
    orbit_k_fov: float = 1.5
    surround_candidates: int = 72
    tail_prune_deg: float = 45.0
    landmark_vis_margin: float = 0.1
    recon_ring_radius: float = 1.5
    recon_ring_candidates: int = 24
    recon_vis_margin: float = 0.3
    ratio_threshold: float = 10.0
    nms_radius: float = 0.5
    association_radius: float = 2.0
    visible_range_stride: int = 4
    aerial_pitch_deg: float = 45.0
    aerial_step_deg: float = 5.0
    near_limit: float = 1.0
    frame_width: int = 256
    frame_height: int = 256
    frame_fov_x_deg: float = 90.0


@dataclass
class Landmark:
    id: int
    label: str
    centroid: np.ndarray
    radius: float

    def __post_init__(self):
        self.centroid = np.asarray(self.centroid, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(self.centroid)):
            raise InputError("landmark centroid must be finite")
        if self.radius <= 0:
            raise InputError("landmark radius must be positive")


@dataclass
class ReconNode:
    position: np.ndarray
    landmark_id: int | None = None

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(self.position)):
            raise InputError("recon node position must be finite")


@dataclass
class TrajectoryFrame:
    camera: Camera
    look_at: np.ndarray


@dataclass
class Trajectory:
    mode: str
    frames: list
    landmark_id: int | None = None
    iterative: bool = False

    def positions(self) -> np.ndarray:
        return np.array([f.camera.translation for f in self.frames])

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "landmark_id": self.landmark_id,
            "iterative": self.iterative,
            "frames": [
                {
                    **f.camera.to_dict(),
                    "lookat": [float(x) for x in f.look_at],
                }
                for f in self.frames
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Trajectory":
        frames = [
            TrajectoryFrame(
                camera=Camera.from_dict(fd),
                look_at=np.asarray(fd["lookat"], dtype=np.float64),
            )
            for fd in d["frames"]
        ]
        return cls(
            mode=d["mode"],
            frames=frames,
            landmark_id=d.get("landmark_id"),
            iterative=bool(d.get("iterative", False)),
        )


@dataclass
class TrajectorySet:
    by_mode: dict = field(default_factory=lambda: {m: [] for m in MODES})

    @property
    def counts(self) -> dict:
        return {m: len(self.by_mode.get(m, [])) for m in MODES}

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def all_trajectories(self) -> list:
        out = []
        for m in MODES:
            out.extend(self.by_mode.get(m, []))
        return out

    def to_dict(self) -> dict:
        return {
            "counts": self.counts,
            "trajectories": [t.to_dict() for t in self.all_trajectories()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrajectorySet":
        ts = cls()
        for td in d["trajectories"]:
            t = Trajectory.from_dict(td)
            ts.by_mode.setdefault(t.mode, []).append(t)
        return ts

    def to_camera_list(self) -> str:
        """Flat interop format: one 3x4 world-to-camera matrix per line."""
        lines = []
        for t in self.all_trajectories():
            for f in t.frames:
                r = f.camera.rotation.T
                tr = -r @ f.camera.translation
                m = np.concatenate([r, tr[:, None]], axis=1).reshape(-1)
                lines.append(" ".join(f"{x:.9g}" for x in m))
        return "\n".join(lines) + ("\n" if lines else "")


def _frame(eye, look_at, cfg: PlannerConfig) -> TrajectoryFrame:
    eye = np.asarray(eye, dtype=np.float64)
    look_at = np.asarray(look_at, dtype=np.float64)
    fx = (cfg.frame_width / 2.0) / math.tan(math.radians(cfg.frame_fov_x_deg) / 2.0)
    cam = Camera(
        fx=fx,
        fy=fx,
        cx=cfg.frame_width / 2.0,
        cy=cfg.frame_height / 2.0,
        width=cfg.frame_width,
        height=cfg.frame_height,
        rotation=look_at_rotation(eye, look_at),
        translation=eye,
    )
    return TrajectoryFrame(camera=cam, look_at=look_at)


def _clear_prefix(scene: RaycastScene, pts: np.ndarray, clearance: float) -> int:
    """Longest frame prefix that is collision-free.

    Frame k is admitted when the segment from frame k-1 keeps ``clearance``
    beyond its length and the six axis rays from frame k hit nothing closer
    than ``clearance`` (misses count as open space).
    """
    n = len(pts)
    if n == 0:
        return 0
    origins = np.repeat(pts, 6, axis=0)
    dirs = np.tile(_AXIS_DIRS, (n, 1))
    t, _, _, _ = scene.raycast_batch(origins, dirs)
    pt_ok = (t.reshape(n, 6) >= clearance).all(axis=1)
    seg_ok = (
        scene.segments_clear(pts[:-1], pts[1:], margin=clearance)
        if n > 1
        else np.zeros(0, dtype=bool)
    )
    if not pt_ok[0]:
        return 0
    m = 1
    while m < n and pt_ok[m] and seg_ok[m - 1]:
        m += 1
    return m


def _displacement(pts: np.ndarray) -> float:
    if len(pts) < 2:
        return 0.0
    return float(np.max(np.linalg.norm(pts - pts[0], axis=1)))


def _rotate_about(v, axis, angle):
    axis = axis / np.linalg.norm(axis)
    c, s = math.cos(angle), math.sin(angle)
    return v * c + np.cross(axis, v) * s + axis * np.dot(axis, v) * (1 - c)


def _pitch_up(v, angle):
    """Rotate a gaze vector upward (toward +z) by ``angle``."""
    axis = np.cross(v, np.array([0.0, 0.0, 1.0]))
    n = np.linalg.norm(axis)
    if n < 1e-12:
        return v.copy()
    return _rotate_about(v, axis / n, angle)


def view_median_depth(pano_depth: DepthMap, yaw: float, cfg: PlannerConfig):
    """Median of the valid ERP depths seen by one subdivision view.

    The view is probed at ``view_probe_size`` squared with the regular
    FoV-x; returns None when no valid depth is visible.
    """
    cam = perspective_camera(
        yaw, 0.0, math.radians(cfg.view_fov_x_deg), cfg.view_probe_size, cfg.view_probe_size
    )
    dirs = cam.pixel_rays() @ cam.rotation.T
    vals, ok = sample_erp_nearest(pano_depth.values, pano_depth.valid, dirs)
    if not np.any(ok):
        return None
    return float(np.median(vals[ok]))


def _orbit_positions(target, start, kind, total_deg, cfg, extension_deg=0.0):
    """Sample an orbital move around ``target`` starting from ``start``.

    kind = "pitch": raise elevation by ``total_deg`` (then optionally swing
    azimuth by ``extension_deg`` at the final elevation).
    kind = "azimuth": rotate about the world up axis by ``total_deg``
    (signed). Step size obeys both the configured angle and max_step.
    """
    v0 = start - target
    radius = np.linalg.norm(v0)
    if radius < 1e-9:
        return np.array([start])
    step = math.radians(cfg.orbit_step_deg)
    max_ang = 0.95 * cfg.max_step / radius
    step = min(step, max_ang) if max_ang > 1e-6 else step
    pts = [start.copy()]
    if kind == "pitch":
        axis = np.cross(v0, np.array([0.0, 0.0, 1.0]))
        n = np.linalg.norm(axis)
        if n < 1e-12:
            return np.array(pts)
        axis = axis / n
        total = math.radians(total_deg)
        k = max(1, int(math.ceil(total / step)))
        for i in range(1, k + 1):
            pts.append(target + _rotate_about(v0, axis, total * i / k))
        if extension_deg > 0:
            v1 = pts[-1] - target
            ext = math.radians(extension_deg)
            k2 = max(1, int(math.ceil(ext / step)))
            up = np.array([0.0, 0.0, 1.0])
            for i in range(1, k2 + 1):
                pts.append(target + _rotate_about(v1, up, ext * i / k2))
    else:
        total = math.radians(total_deg)
        k = max(1, int(math.ceil(abs(total) / step)))
        up = np.array([0.0, 0.0, 1.0])
        for i in range(1, k + 1):
            pts.append(target + _rotate_about(v0, up, total * i / k))
    return np.array(pts)


def plan_regular(
    mesh: TriangleMesh,
    navmesh: NavMesh,
    pano_depth: DepthMap,
    cfg: PlannerConfig | None = None,
    scene: RaycastScene | None = None,
) -> list:
    """Orbital trajectories from three uniform panorama subdivisions.

    Each 120-degree FoV-x view defines an orbital target on its center ray at
    the view's median depth. Per view the camera generates a +45-degree pitch
    orbit (optionally extended by a +60-degree azimuth swing) followed by
    -120 and +120 azimuth orbits; the pitched orbit is emitted first. Orbits
    truncate at the first collision and trajectories with negligible
    displacement are discarded.
    """
    cfg = cfg or PlannerConfig()
    scene = scene or RaycastScene(mesh)
    center = np.zeros(3)
    out = []
    yaws = [0.0, 2.0 * math.pi / 3.0, 4.0 * math.pi / 3.0]
    for yaw in yaws:
        med = view_median_depth(pano_depth, yaw, cfg)
        if med is None:
            continue
        target = lonlat_to_direction(yaw, 0.0) * med
        moves = [
            (
                "pitch",
                cfg.regular_pitch_deg,
                cfg.regular_extra_azimuth_deg if cfg.regular_azimuth_extension else 0.0,
            ),
            ("azimuth", -cfg.regular_azimuth_deg, 0.0),
            ("azimuth", cfg.regular_azimuth_deg, 0.0),
        ]
        for kind, amount, ext in moves:
            pts = _orbit_positions(target, center, kind, amount, cfg, extension_deg=ext)
            m = _clear_prefix(scene, pts, cfg.clearance_min)
            pts = pts[:m]
            if len(pts) < 2 or _displacement(pts) < cfg.min_move:
                continue
            frames = [_frame(p, target, cfg) for p in pts]
            out.append(Trajectory(mode="regular", frames=frames))
            if len(out) >= MODE_CAPS["regular"]:
                return out
    return out


def surrounding_candidates(
    scene: RaycastScene, nav: NavMesh, lm: Landmark, cfg: PlannerConfig
):
    """Candidate ring around a landmark: (eye positions, cell index, validity).

    A candidate is valid when its ring point lies on a walkable cell and the
    ray toward the landmark centroid is unobstructed up to the landmark's
    bounding sphere.
    """
    radius = max(cfg.orbit_r_min, cfg.orbit_k_fov * lm.radius)
    k = cfg.surround_candidates
    angles = 2.0 * math.pi * np.arange(k) / k
    xs = lm.centroid[0] + radius * np.cos(angles)
    ys = lm.centroid[1] + radius * np.sin(angles)
    eyes = np.zeros((k, 3))
    cells = np.full(k, -1, dtype=np.int64)
    valid = np.zeros(k, dtype=bool)
    for q in range(k):
        c = nav.cell_at_point(xs[q], ys[q])
        if c is None:
            continue
        cells[q] = c
        eyes[q] = nav.centers[c] + np.array([0.0, 0.0, cfg.camera_height])
    has_cell = cells >= 0
    if np.any(has_cell):
        deltas = lm.centroid[None, :] - eyes[has_cell]
        dists = np.linalg.norm(deltas, axis=1)
        dirs = deltas / np.maximum(dists, 1e-12)[:, None]
        t, _, _, _ = scene.raycast_batch(eyes[has_cell], dirs)
        reach = dists - lm.radius - cfg.landmark_vis_margin
        valid[has_cell] = t >= reach
    return eyes, cells, valid


def _longest_circular_run(valid: np.ndarray):
    """(start, length) of the longest run of True with wraparound.

    Ties break to the lowest start index; all-True returns (0, n).
    """
    n = len(valid)
    if valid.all():
        return 0, n
    if not valid.any():
        return 0, 0
    best_start, best_len = 0, 0
    idx = 0
    doubled = np.concatenate([valid, valid])
    while idx < n:
        if not doubled[idx]:
            idx += 1
            continue
        j = idx
        while j < idx + n and doubled[j]:
            j += 1
        if j - idx > best_len:
            best_start, best_len = idx, j - idx
        idx = j
    return best_start, min(best_len, n)


def plan_surrounding(
    mesh: TriangleMesh,
    navmesh: NavMesh,
    landmarks: list,
    cfg: PlannerConfig | None = None,
    scene: RaycastScene | None = None,
    dijkstra=None,
) -> list:
    """Arcs circling landmarks, connected to the start via NavMesh paths.

    Landmarks are consumed in input (significance) order. Candidates on the
    ideal ring are validated, the longest continuous arc is kept, its tails
    are pruned where the heading leaves the circular direction, and the
    panorama center connects to the nearer arc endpoint through the Dijkstra
    field. At most five trajectories are returned.
    """
    cfg = cfg or PlannerConfig()
    scene = scene or RaycastScene(mesh)
    if navmesh.n_cells == 0 or not landmarks:
        return []
    source = navmesh.nearest_cell(0.0, 0.0)
    field_ = dijkstra or dijkstra_field(navmesh, source)
    out = []
    for lm in landmarks:
        if len(out) >= MODE_CAPS["surrounding"]:
            break
        eyes, cells, valid = surrounding_candidates(scene, navmesh, lm, cfg)
        if not valid.any():
            continue
        start_idx, run = _longest_circular_run(valid)
        if run < 2:
            continue
        order = [(start_idx + q) % len(valid) for q in range(run)]
        closed = run == len(valid)

        # collapse consecutive duplicates introduced by cell snapping
        arc_cells = []
        for q in order:
            c = int(cells[q])
            if not arc_cells or arc_cells[-1][0] != c:
                arc_cells.append((c, q))
        if not closed:
            arc_cells = _prune_tails(arc_cells, navmesh, lm, cfg)
        if len(arc_cells) < 2:
            continue

        # connect the start to the nearer endpoint
        end_a, end_b = arc_cells[0][0], arc_cells[-1][0]
        da, db = field_.distance[end_a], field_.distance[end_b]
        if closed:
            arc_cell_ids = [c for c, _ in arc_cells]
            dists = field_.distance[arc_cell_ids]
            if not np.any(np.isfinite(dists)):
                continue
            k0 = int(np.argmin(np.where(np.isfinite(dists), dists, np.inf)))
            entry = arc_cell_ids[k0]
            ordered = arc_cells[k0:] + arc_cells[:k0]
            ordered.append(ordered[0])  # close the loop
        elif np.isfinite(da) or np.isfinite(db):
            if not np.isfinite(db) or (np.isfinite(da) and da <= db):
                entry = end_a
                ordered = arc_cells
            else:
                entry = end_b
                ordered = arc_cells[::-1]
        else:
            continue
        path = shortest_path(field_, navmesh, entry)
        lift = np.array([0.0, 0.0, cfg.camera_height])
        pts = [p + lift for p in path]
        for c, _ in ordered[1:] if pts else ordered:
            pts.append(navmesh.centers[c] + lift)
        pts = np.array(pts)
        m = _clear_prefix(scene, pts, cfg.clearance_min)
        pts = pts[:m]
        if len(pts) < 2 or _displacement(pts) < cfg.min_move:
            continue
        frames = [_frame(p, lm.centroid, cfg) for p in pts]
        out.append(Trajectory(mode="surrounding", frames=frames, landmark_id=lm.id))
    return out


def _prune_tails(arc_cells, nav, lm, cfg):
    """Drop end nodes whose heading leaves the circular direction."""
    limit = math.radians(cfg.tail_prune_deg)

    def deviation(c_prev, c_last):
        h = nav.centers[c_last][:2] - nav.centers[c_prev][:2]
        hn = np.linalg.norm(h)
        if hn < 1e-12:
            return 0.0
        radial = nav.centers[c_last][:2] - lm.centroid[:2]
        rn = np.linalg.norm(radial)
        if rn < 1e-12:
            return 0.0
        tangent = np.array([-radial[1], radial[0]]) / rn
        cosang = abs(float(np.dot(h / hn, tangent)))
        return math.acos(min(1.0, max(-1.0, cosang)))

    cells = list(arc_cells)
    while len(cells) >= 3 and deviation(cells[-2][0], cells[-1][0]) > limit:
        cells.pop()
    while len(cells) >= 3 and deviation(cells[1][0], cells[0][0]) > limit:
        cells.pop(0)
    return cells


def detect_recon_targets(
    mesh: TriangleMesh,
    landmarks: list,
    ratio_threshold: float | None = None,
    nms_radius: float = 0.5,
    association_radius: float = 2.0,
) -> list:
    """Cluster stretched-face centroids into reconstruction target nodes.

    Faces flagged by the aspect test are clustered by non-maximum
    suppression: candidates are ranked by how many flagged centroids fall
    within ``nms_radius``, the winner suppresses its neighborhood, and the
    survivors become nodes. Each node adopts the nearest landmark within
    ``association_radius`` when one exists.
    """
    if ratio_threshold is not None:
        flags = stretch_edge_ratios(mesh.vertices, mesh.faces) > ratio_threshold
    else:
        if mesh.face_flags is None:
            raise InputError("mesh carries no face flags and no threshold was given")
        flags = mesh.face_flags
    cents = mesh.face_centroids()[flags]
    if len(cents) == 0:
        return []
    d2 = np.sum((cents[:, None, :] - cents[None, :, :]) ** 2, axis=2)
    within = d2 <= nms_radius**2
    counts = within.sum(axis=1)
    alive = np.ones(len(cents), dtype=bool)
    nodes = []
    while alive.any():
        score = np.where(alive, counts, -1)
        best = int(np.argmax(score))  # argmax takes the lowest index on ties
        pos = cents[best]
        lm_id = None
        if landmarks:
            dl = [np.linalg.norm(lm.centroid - pos) for lm in landmarks]
            k = int(np.argmin(dl))
            if dl[k] <= association_radius:
                lm_id = landmarks[k].id
        nodes.append(ReconNode(position=pos.copy(), landmark_id=lm_id))
        alive &= ~within[best]
    return nodes


def _visible_range(scene, nav, eye, stride):
    """Count NavMesh cells (every stride-th) with unobstructed sight."""
    targets = nav.centers[::stride] + np.array([0.0, 0.0, 0.1])
    starts = np.tile(eye, (len(targets), 1))
    return int(scene.segments_clear(starts, targets).sum())


def plan_recon_aware(
    mesh: TriangleMesh,
    navmesh: NavMesh,
    nodes: list,
    cfg: PlannerConfig | None = None,
    scene: RaycastScene | None = None,
    dijkstra=None,
) -> list:
    """Iterative orbits that keep a fixed gaze on reconstruction nodes.

    For each node a ring of viewpoints is validated (walkable, reachable,
    line of sight); the endpoint minimizing the vertical viewing angle wins,
    with ties going to the candidate seeing the most NavMesh cells and then
    the lowest index. The camera walks the NavMesh to the endpoint and then
    orbits the node, always looking at it. At most ten trajectories.
    """
    cfg = cfg or PlannerConfig()
    scene = scene or RaycastScene(mesh)
    if navmesh.n_cells == 0 or not nodes:
        return []
    source = navmesh.nearest_cell(0.0, 0.0)
    field_ = dijkstra or dijkstra_field(navmesh, source)
    out = []
    for node in nodes:
        if len(out) >= MODE_CAPS["recon_aware"]:
            break
        k = cfg.recon_ring_candidates
        angles = 2.0 * math.pi * np.arange(k) / k
        cand = []
        for q in range(k):
            x = node.position[0] + cfg.recon_ring_radius * math.cos(angles[q])
            y = node.position[1] + cfg.recon_ring_radius * math.sin(angles[q])
            c = navmesh.cell_at_point(x, y)
            if c is None or not np.isfinite(field_.distance[c]):
                continue
            eye = navmesh.centers[c] + np.array([0.0, 0.0, cfg.camera_height])
            delta = node.position - eye
            dist = np.linalg.norm(delta)
            if dist < 1e-9:
                continue
            t, _, _, _ = scene.raycast_batch(eye[None], (delta / dist)[None])
            if t[0] < dist - cfg.recon_vis_margin:
                continue
            elev = abs(math.degrees(math.asin(np.clip(delta[2] / dist, -1, 1))))
            cand.append((q, c, eye, elev))
        if not cand:
            continue
        scored = []
        for q, c, eye, elev in cand:
            scored.append((round(elev), -_visible_range(scene, navmesh, eye, cfg.visible_range_stride), q, c, eye))
        scored.sort(key=lambda s: (s[0], s[1], s[2]))
        _, _, q0, c0, eye0 = scored[0]
        path = shortest_path(field_, navmesh, c0)
        if not path:
            continue
        lift = np.array([0.0, 0.0, cfg.camera_height])
        pts = [p + lift for p in path]
        # orbit at the endpoint radius/height, truncated at the first
        # collision or when leaving the walkable region
        r_orbit = float(np.linalg.norm(eye0[:2] - node.position[:2]))
        z_orbit = eye0[2]
        theta0 = math.atan2(eye0[1] - node.position[1], eye0[0] - node.position[0])
        step = math.radians(cfg.orbit_step_deg)
        n_steps = int(round(2.0 * math.pi / step))
        orbit = []
        for s in range(1, n_steps + 1):
            th = theta0 + s * step
            p = np.array(
                [
                    node.position[0] + r_orbit * math.cos(th),
                    node.position[1] + r_orbit * math.sin(th),
                    z_orbit,
                ]
            )
            if navmesh.cell_at_point(p[0], p[1]) is None:
                break
            orbit.append(p)
        pts = np.array(pts + orbit)
        m = _clear_prefix(scene, pts, cfg.clearance_min)
        pts = pts[:m]
        if len(pts) < 2 or _displacement(pts) < cfg.min_move:
            continue
        frames = [_frame(p, node.position, cfg) for p in pts]
        out.append(
            Trajectory(
                mode="recon_aware",
                frames=frames,
                landmark_id=node.landmark_id,
                iterative=True,
            )
        )
    return out


def plan_wandering(
    navmesh: NavMesh,
    cfg: PlannerConfig | None = None,
    scene: RaycastScene | None = None,
    dijkstra=None,
) -> list:
    """Farthest-reach walks, one per angular sector, best three kept.

    The NavMesh is split into eight uniform sectors around the world origin;
    each reachable sector contributes its Dijkstra-farthest cell, and the
    three largest distances win. The camera follows the shortest path,
    looking along the walking direction.
    """
    cfg = cfg or PlannerConfig()
    if navmesh.n_cells == 0:
        return []
    source = navmesh.nearest_cell(0.0, 0.0)
    field_ = dijkstra or dijkstra_field(navmesh, source)
    ang = np.arctan2(navmesh.centers[:, 1], navmesh.centers[:, 0])
    sector = np.floor(np.mod(ang, 2.0 * np.pi) / (math.pi / 4.0)).astype(int)
    sector = np.clip(sector, 0, 7)
    picks = []
    for s in range(8):
        in_sector = np.nonzero((sector == s) & np.isfinite(field_.distance))[0]
        in_sector = in_sector[in_sector != source]
        if len(in_sector) == 0:
            continue
        d = field_.distance[in_sector]
        best = in_sector[int(np.argmax(d))]
        picks.append((float(field_.distance[best]), s, int(best)))
    picks.sort(key=lambda p: (-p[0], p[1]))
    out = []
    lift = np.array([0.0, 0.0, cfg.camera_height])
    for dist, s, cell in picks[: MODE_CAPS["wandering"]]:
        path = shortest_path(field_, navmesh, cell)
        if len(path) < 2:
            continue
        pts = np.array([p + lift for p in path])
        if scene is not None:
            m = _clear_prefix(scene, pts, cfg.clearance_min)
            pts = pts[:m]
        if len(pts) < 2 or _displacement(pts) < cfg.min_move:
            continue
        frames = []
        for k in range(len(pts)):
            look = pts[k + 1] if k + 1 < len(pts) else pts[k] + (pts[k] - pts[k - 1])
            frames.append(_frame(pts[k], look, cfg))
        out.append(Trajectory(mode="wandering", frames=frames))
    return out


def plan_aerial(
    mesh: TriangleMesh,
    base: list,
    cfg: PlannerConfig | None = None,
    scene: RaycastScene | None = None,
) -> list:
    """Pitched-up copies of surrounding and wandering trajectories.

    Every frame's gaze is lifted by +45 degrees; whenever the pitched view
    ray hits the mesh within ``near_limit`` the pitch backs off in 5-degree
    steps until the ray clears or reaches level. Camera positions are
    inherited unchanged. At most eight trajectories.
    """
    cfg = cfg or PlannerConfig()
    scene = scene or RaycastScene(mesh)
    out = []
    for traj in base:
        if len(out) >= MODE_CAPS["aerial"]:
            break
        frames = []
        for f in traj.frames:
            eye = f.camera.translation
            v = f.look_at - eye
            if np.linalg.norm(v) < 1e-9:
                frames.append(TrajectoryFrame(camera=f.camera, look_at=f.look_at.copy()))
                continue
            pitch = cfg.aerial_pitch_deg
            chosen = None
            while pitch > 0:
                v2 = _pitch_up(v, math.radians(pitch))
                ray = v2 / np.linalg.norm(v2)
                t, _, _, _ = scene.raycast_batch(eye[None], ray[None])
                if t[0] >= cfg.near_limit:
                    chosen = v2
                    break
                pitch -= cfg.aerial_step_deg
            if chosen is None:
                chosen = v
            frames.append(_frame(eye, eye + chosen, cfg))
        if len(frames) >= 2:
            out.append(
                Trajectory(
                    mode="aerial",
                    frames=frames,
                    landmark_id=traj.landmark_id,
                    iterative=False,
                )
            )
    return out


def plan_all(
    mesh: TriangleMesh,
    navmesh: NavMesh,
    landmarks: list,
    pano_depth: DepthMap,
    cfg: PlannerConfig | None = None,
    seed: int = 0,
) -> TrajectorySet:
    """Run every planner in order and enforce the per-mode and total caps.

    The planning heuristics are deterministic; ``seed`` is accepted for
    interface stability and reproducibility bookkeeping.
    """
    cfg = cfg or PlannerConfig()
    scene = RaycastScene(mesh)
    field_ = None
    if navmesh.n_cells > 0:
        field_ = dijkstra_field(navmesh, navmesh.nearest_cell(0.0, 0.0))
    ts = TrajectorySet()
    ts.by_mode["regular"] = plan_regular(mesh, navmesh, pano_depth, cfg, scene=scene)[
        : MODE_CAPS["regular"]
    ]
    ts.by_mode["surrounding"] = plan_surrounding(
        mesh, navmesh, landmarks, cfg, scene=scene, dijkstra=field_
    )[: MODE_CAPS["surrounding"]]
    nodes = detect_recon_targets(
        mesh,
        landmarks,
        ratio_threshold=None if mesh.face_flags is not None else cfg.ratio_threshold,
        nms_radius=cfg.nms_radius,
        association_radius=cfg.association_radius,
    )
    ts.by_mode["recon_aware"] = plan_recon_aware(
        mesh, navmesh, nodes, cfg, scene=scene, dijkstra=field_
    )[: MODE_CAPS["recon_aware"]]
    ts.by_mode["wandering"] = plan_wandering(navmesh, cfg, scene=scene, dijkstra=field_)[
        : MODE_CAPS["wandering"]
    ]
    base = ts.by_mode["surrounding"] + ts.by_mode["wandering"]
    ts.by_mode["aerial"] = plan_aerial(mesh, base, cfg, scene=scene)[: MODE_CAPS["aerial"]]
    while ts.total > TOTAL_CAP and ts.by_mode["aerial"]:
        ts.by_mode["aerial"].pop()
    return ts
