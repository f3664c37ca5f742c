import json
import math

import numpy as np
import pytest

from worldgeom.geometry import (
    DepthMap,
    RaycastScene,
    TriangleMesh,
    build_panoramic_mesh,
    lonlat_to_direction,
    perspective_camera,
    sample_erp_nearest,
)
from worldgeom.navmesh import NavMesh, build_navmesh, refine_navmesh
from worldgeom.planner import (
    MODE_CAPS,
    Landmark,
    PlannerConfig,
    ReconNode,
    Trajectory,
    TrajectorySet,
    detect_recon_targets,
    plan_aerial,
    plan_all,
    plan_recon_aware,
    plan_regular,
    plan_surrounding,
    plan_wandering,
    surrounding_candidates,
    view_median_depth,
)
from worldgeom.synth import synth_scene


def sphere_depth(radius=10.0, h=64):
    return DepthMap(values=np.full((h, 2 * h), radius))


def empty_nav():
    return NavMesh(
        centers=np.zeros((0, 3)),
        ij=np.zeros((0, 2), dtype=np.int64),
        adjacency=[],
        cell_size=0.25,
        origin=np.zeros(2),
    )


def floor_with_pillar(floor=12.0, px=2.5, pr=0.4, ph=2.0, floor_z=-1.4):
    """Flat floor plus a square pillar; pillar top wound downward so only
    the floor is walkable."""
    s = floor / 2.0
    verts = [[-s, -s, floor_z], [s, -s, floor_z], [s, s, floor_z], [-s, s, floor_z]]
    faces = [[0, 1, 2], [0, 2, 3]]
    x0, x1 = px - pr, px + pr
    y0, y1 = -pr, pr
    z0, z1 = floor_z, floor_z + ph
    base = len(verts)
    verts += [
        [x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
        [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1],
    ]
    quads = [
        (base + 0, base + 1, base + 5, base + 4),
        (base + 1, base + 2, base + 6, base + 5),
        (base + 2, base + 3, base + 7, base + 6),
        (base + 3, base + 0, base + 4, base + 7),
        (base + 6, base + 7, base + 4, base + 5),  # top wound downward
    ]
    for a, b, c, d in quads:
        faces += [[a, b, c], [a, c, d]]
    return TriangleMesh(vertices=np.array(verts, float), faces=np.array(faces))


@pytest.fixture(scope="module")
def pillar_setup():
    mesh = floor_with_pillar()
    nav = build_navmesh(mesh, cell_size=0.25, agent_height=1.6)
    nav = refine_navmesh(nav, mesh, erosion_radius=0.25, bridge_gap=0.5)
    lm = Landmark(
        id=0,
        label="pillar",
        centroid=np.array([2.5, 0.0, -0.4]),
        radius=math.hypot(0.4, 1.0),
    )
    return mesh, nav, lm


# ---------------------------------------------------------------------------
# regular
# ---------------------------------------------------------------------------


def test_regular_open_sphere_yields_nine():
    depth = sphere_depth(10.0)
    mesh = build_panoramic_mesh(depth, rows=24, cols=48)
    out = plan_regular(mesh, empty_nav(), depth)
    assert len(out) == 9
    assert all(t.mode == "regular" for t in out)
    for t in out:
        assert len(t.frames) >= 2
        assert np.allclose(t.positions()[0], 0.0)  # starts at the center
        assert t.landmark_id is None and not t.iterative


def test_regular_enclosed_shell_discards_all():
    # 0.5 m shell (0.25 m radius): clearance leaves < min_move of motion
    depth = sphere_depth(0.25, h=32)
    mesh = build_panoramic_mesh(depth, rows=16, cols=32)
    out = plan_regular(mesh, empty_nav(), depth)
    assert out == []


def test_regular_orbit_radius_is_view_median():
    rng = np.random.default_rng(0)
    vals = rng.uniform(6.0, 14.0, size=(64, 128))
    depth = DepthMap(values=vals)
    mesh = build_panoramic_mesh(depth, rows=24, cols=48)
    cfg = PlannerConfig()
    out = plan_regular(mesh, empty_nav(), depth, cfg)
    # oracle: resample the view and take the median
    cam = perspective_camera(0.0, 0.0, math.radians(cfg.view_fov_x_deg), 256, 256)
    dirs = cam.pixel_rays() @ cam.rotation.T
    samples, ok = sample_erp_nearest(depth.values, depth.valid, dirs)
    med = float(np.median(samples[ok]))
    target = out[0].frames[0].look_at
    assert np.linalg.norm(target) == pytest.approx(med, rel=1e-9)
    assert view_median_depth(depth, 0.0, cfg) == pytest.approx(med)


def test_regular_pitch_before_azimuth_order():
    depth = sphere_depth(10.0)
    mesh = build_panoramic_mesh(depth, rows=24, cols=48)
    out = plan_regular(mesh, empty_nav(), depth)
    # first trajectory of each view is the pitched orbit: it gains altitude
    for view in range(3):
        peak = out[3 * view].positions()[:, 2].max()
        assert peak > 1.0
        assert abs(out[3 * view + 1].positions()[:, 2].max()) < 1e-6


def test_regular_azimuth_extension_flag():
    depth = sphere_depth(10.0)
    mesh = build_panoramic_mesh(depth, rows=24, cols=48)
    with_ext = plan_regular(mesh, empty_nav(), depth, PlannerConfig())
    without = plan_regular(
        mesh, empty_nav(), depth, PlannerConfig(regular_azimuth_extension=False)
    )
    assert len(with_ext[0].frames) > len(without[0].frames)
    assert len(with_ext) == len(without) == 9


# ---------------------------------------------------------------------------
# surrounding
# ---------------------------------------------------------------------------


def test_surrounding_free_standing_pillar_full_loop(pillar_setup):
    mesh, nav, lm = pillar_setup
    cfg = PlannerConfig()
    scene = RaycastScene(mesh)
    eyes, cells, valid = surrounding_candidates(scene, nav, lm, cfg)
    assert valid.all()  # oracle: every ring candidate is walkable and sees it
    out = plan_surrounding(mesh, nav, [lm], cfg)
    assert len(out) == 1
    traj = out[0]
    assert traj.landmark_id == 0 and traj.mode == "surrounding"
    # the arc wraps the full circle around the pillar
    rel = traj.positions()[:, :2] - lm.centroid[:2]
    ang = np.unwrap(np.arctan2(rel[:, 1], rel[:, 0]))
    assert abs(ang[-1] - ang[0]) > 1.75 * np.pi
    for f in traj.frames:
        assert np.allclose(f.look_at, lm.centroid)


def test_surrounding_wall_side_candidates_invalid(pillar_setup):
    mesh, nav, lm = pillar_setup
    # wall right behind the pillar blocks part of the ring
    wall_x = 2.5 + 0.9
    base = len(mesh.vertices)
    verts = np.concatenate(
        [mesh.vertices, [[wall_x, -6, -1.4], [wall_x, 6, -1.4], [wall_x, 6, 2.0], [wall_x, -6, 2.0]]]
    )
    faces = np.concatenate([mesh.faces, [[base, base + 1, base + 2], [base, base + 2, base + 3]]])
    walled = TriangleMesh(vertices=verts, faces=faces)
    nav2 = build_navmesh(walled, cell_size=0.25)
    cfg = PlannerConfig()
    eyes, cells, valid = surrounding_candidates(RaycastScene(walled), nav2, lm, cfg)
    assert valid.any() and not valid.all()
    out = plan_surrounding(walled, nav2, [lm], cfg)
    if out:  # arc must stay below a full turn
        rel = out[0].positions()[:, :2] - lm.centroid[:2]
        ang = np.unwrap(np.arctan2(rel[:, 1], rel[:, 0]))
        assert abs(ang[-1] - ang[0]) < 2 * np.pi


def test_surrounding_empty_landmarks(pillar_setup):
    mesh, nav, _ = pillar_setup
    assert plan_surrounding(mesh, nav, []) == []


def test_surrounding_cap_five(pillar_setup):
    mesh, nav, lm = pillar_setup
    lms = [
        Landmark(id=k, label=f"lm{k}", centroid=lm.centroid, radius=lm.radius)
        for k in range(8)
    ]
    out = plan_surrounding(mesh, nav, lms)
    assert len(out) == MODE_CAPS["surrounding"]


# ---------------------------------------------------------------------------
# recon targets and recon-aware
# ---------------------------------------------------------------------------


def test_recon_targets_sphere_is_clean():
    mesh = build_panoramic_mesh(sphere_depth(5.0, h=32), rows=16, cols=32)
    assert detect_recon_targets(mesh, [], ratio_threshold=10.0) == []


def test_recon_targets_step_scene_on_discontinuity():
    vals = np.full((64, 128), 2.0)
    vals[:, 64:] = 8.0
    mesh = build_panoramic_mesh(DepthMap(values=vals), rows=24, cols=48)
    nodes = detect_recon_targets(mesh, [], ratio_threshold=10.0, nms_radius=0.5)
    assert nodes
    for node in nodes:
        lon = math.degrees(math.atan2(node.position[1], node.position[0]))
        assert abs(lon) < 15 or abs(abs(lon) - 180) < 15


def tiny_triangle(center, scale=0.01, base=0):
    c = np.asarray(center, float)
    v = np.array([c, c + [scale, 0, 0], c + [0, scale, 0]])
    return v, np.array([[base, base + 1, base + 2]])


def flagged_mesh(centroids):
    verts, faces = [], []
    for k, c in enumerate(centroids):
        v, f = tiny_triangle(np.asarray(c) - [0.0033, 0.0033, 0], base=3 * k)
        verts.append(v)
        faces.append(f)
    mesh = TriangleMesh(vertices=np.concatenate(verts), faces=np.concatenate(faces))
    mesh.face_flags = np.ones(len(mesh.faces), dtype=bool)
    return mesh


def test_nms_merges_close_clusters():
    mesh = flagged_mesh([[1.0, 0, 0], [1.1, 0, 0]])
    nodes = detect_recon_targets(mesh, [], ratio_threshold=None, nms_radius=0.5)
    assert len(nodes) == 1


def test_nms_matches_exhaustive_oracle():
    rng = np.random.default_rng(12)
    pts = rng.uniform(-2, 2, size=(25, 3))
    pts[:, 2] = 0
    mesh = flagged_mesh(pts)
    nms_radius = 0.6
    nodes = detect_recon_targets(mesh, [], ratio_threshold=None, nms_radius=nms_radius)
    # oracle: greedy suppression over the same centroids
    cents = mesh.face_centroids()
    d = np.linalg.norm(cents[:, None] - cents[None, :], axis=2)
    within = d <= nms_radius
    counts = within.sum(axis=1)
    alive = np.ones(len(cents), bool)
    expect = []
    while alive.any():
        score = np.where(alive, counts, -1)
        best = int(np.argmax(score))
        expect.append(cents[best])
        alive &= ~within[best]
    assert len(nodes) == len(expect)
    for node, ref in zip(nodes, expect):
        assert np.allclose(node.position, ref)


def test_recon_assoc_with_landmark():
    mesh = flagged_mesh([[1.0, 0, 0]])
    near = Landmark(id=7, label="x", centroid=np.array([1.2, 0, 0]), radius=0.5)
    far = Landmark(id=8, label="y", centroid=np.array([9, 9, 0]), radius=0.5)
    nodes = detect_recon_targets(mesh, [far, near], ratio_threshold=None, association_radius=2.0)
    assert nodes[0].landmark_id == 7
    nodes2 = detect_recon_targets(mesh, [far], ratio_threshold=None, association_radius=2.0)
    assert nodes2[0].landmark_id is None


def test_recon_aware_fixed_gaze_and_iterative(pillar_setup):
    mesh, nav, _ = pillar_setup
    # a stretched-face node sits on geometry: the pillar's front face
    node = ReconNode(position=np.array([2.1, 0.0, 0.0]), landmark_id=0)
    out = plan_recon_aware(mesh, nav, [node])
    assert len(out) == 1
    traj = out[0]
    assert traj.iterative and traj.mode == "recon_aware"
    for f in traj.frames:
        assert np.linalg.norm(f.look_at - node.position) < 1e-9


def test_recon_aware_cap_ten(pillar_setup):
    mesh, nav, _ = pillar_setup
    angles = np.linspace(0, 2 * np.pi, 12, endpoint=False)
    nodes = [
        ReconNode(position=np.array([3.5 * math.cos(a), 3.5 * math.sin(a), 0.0]))
        for a in angles
    ]
    out = plan_recon_aware(mesh, nav, nodes)
    assert len(out) == MODE_CAPS["recon_aware"]


def test_recon_aware_unreachable_node_skipped(pillar_setup):
    mesh, nav, _ = pillar_setup
    out = plan_recon_aware(mesh, nav, [ReconNode(position=np.array([50.0, 50.0, 0.0]))])
    assert out == []


# ---------------------------------------------------------------------------
# wandering
# ---------------------------------------------------------------------------


def test_wandering_corridor_selects_field_argmax():
    ij = [(i, 0) for i in range(40)]
    nav = NavMesh.from_grid(ij, cell_size=1.0, origin=(-0.5, -0.5))
    out = plan_wandering(nav)
    assert len(out) == 1
    traj = out[0]
    end = traj.positions()[-1]
    from worldgeom.navmesh import dijkstra_field

    field = dijkstra_field(nav, nav.nearest_cell(0, 0))
    far = nav.centers[int(np.nanargmax(np.where(np.isfinite(field.distance), field.distance, -1)))]
    assert np.allclose(end[:2], far[:2])
    assert traj.landmark_id is None and not traj.iterative


def test_wandering_disk_reaches_boundary():
    r = 10
    ij = [
        (i, j)
        for i in range(-r, r + 1)
        for j in range(-r, r + 1)
        if i * i + j * j <= r * r
    ]
    nav = NavMesh.from_grid(ij, cell_size=0.5, origin=(-0.25, -0.25))
    out = plan_wandering(nav)
    assert 1 <= len(out) <= 3
    for traj in out:
        end = traj.positions()[-1][:2]
        assert np.linalg.norm(end) > (r - 1.5) * 0.5


def test_wandering_cap_three():
    ij = [(0, 0)]
    for arm in range(5):  # 5 reachable sectors out of 8
        a = arm * 2 * np.pi / 5 + 0.1
        for k in range(1, 15):
            ij.append((round(k * math.cos(a)), round(k * math.sin(a))))
    nav = NavMesh.from_grid(set(ij), cell_size=0.5, origin=(-0.25, -0.25))
    out = plan_wandering(nav)
    assert len(out) == MODE_CAPS["wandering"]


def test_wandering_empty_navmesh():
    assert plan_wandering(empty_nav()) == []


# ---------------------------------------------------------------------------
# aerial
# ---------------------------------------------------------------------------


def open_floor_base(n_traj=1, n_frames=6):
    s = 20.0
    floor = TriangleMesh(
        vertices=[[-s, -s, -1.4], [s, -s, -1.4], [s, s, -1.4], [-s, s, -1.4]],
        faces=[[0, 1, 2], [0, 2, 3]],
    )
    cfg = PlannerConfig()
    base = []
    from worldgeom.planner import _frame

    for t in range(n_traj):
        frames = []
        for k in range(n_frames):
            eye = np.array([0.5 * k, 0.1 * t, 0.0])
            frames.append(_frame(eye, eye + np.array([1.0, 0, 0]), cfg))
        base.append(Trajectory(mode="wandering", frames=frames))
    return floor, base


def test_aerial_open_sky_exact_pitch():
    floor, base = open_floor_base()
    out = plan_aerial(floor, base)
    assert len(out) == 1
    for f_base, f_air in zip(base[0].frames, out[0].frames):
        v = f_air.look_at - f_air.camera.translation
        elev = math.degrees(math.asin(v[2] / np.linalg.norm(v)))
        assert elev == pytest.approx(45.0, abs=1e-9)
        assert np.allclose(f_air.camera.translation, f_base.camera.translation)


def test_aerial_low_ceiling_reduces_pitch():
    floor, base = open_floor_base()
    s = 20.0
    verts = np.concatenate(
        [floor.vertices, [[-s, -s, 0.2], [s, -s, 0.2], [s, s, 0.2], [-s, s, 0.2]]]
    )
    faces = np.concatenate([floor.faces, [[4, 6, 5], [4, 7, 6]]])
    ceiling = TriangleMesh(vertices=verts, faces=faces)
    out = plan_aerial(ceiling, base, PlannerConfig(near_limit=1.0))
    for f in out[0].frames:
        v = f.look_at - f.camera.translation
        elev = math.degrees(math.asin(v[2] / np.linalg.norm(v)))
        assert elev < 45.0 - 1e-9


def test_aerial_cap_eight():
    floor, base = open_floor_base(n_traj=10)
    out = plan_aerial(floor, base)
    assert len(out) == MODE_CAPS["aerial"]
    assert all(t.mode == "aerial" and not t.iterative for t in out)


# ---------------------------------------------------------------------------
# plan_all
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def parsed_pillar_scene():
    scene = synth_scene("pillar_floor", erp_height=96, seed=0)
    mesh = build_panoramic_mesh(scene.depth, rows=28, cols=56)
    nav = build_navmesh(mesh, cell_size=0.25)
    nav = refine_navmesh(nav, mesh, erosion_radius=0.25, bridge_gap=0.5)
    return mesh, nav, scene


def test_plan_all_caps_and_structure(parsed_pillar_scene):
    mesh, nav, scene = parsed_pillar_scene
    ts = plan_all(mesh, nav, scene.landmarks, scene.depth, seed=0)
    for mode, cap in MODE_CAPS.items():
        assert ts.counts[mode] <= cap
    assert ts.total <= 35
    assert ts.counts["regular"] > 0
    assert ts.counts["wandering"] > 0
    for t in ts.all_trajectories():
        start = t.positions()[0]
        assert np.linalg.norm(start) <= nav.cell_size + 1e-6
        if t.mode in ("regular", "wandering"):
            assert t.landmark_id is None
        if t.mode == "surrounding":
            assert t.landmark_id is not None
        assert t.iterative == (t.mode == "recon_aware")


def test_plan_all_deterministic(parsed_pillar_scene):
    mesh, nav, scene = parsed_pillar_scene
    a = plan_all(mesh, nav, scene.landmarks, scene.depth, seed=7)
    b = plan_all(mesh, nav, scene.landmarks, scene.depth, seed=7)
    ja = json.dumps(a.to_dict(), sort_keys=True)
    jb = json.dumps(b.to_dict(), sort_keys=True)
    assert ja == jb


def test_plan_all_empty_navmesh_only_regular(parsed_pillar_scene):
    mesh, _, scene = parsed_pillar_scene
    ts = plan_all(mesh, empty_nav(), scene.landmarks, scene.depth, seed=0)
    assert ts.counts["regular"] > 0
    for mode in ("surrounding", "recon_aware", "wandering", "aerial"):
        assert ts.counts[mode] == 0


def test_trajectory_set_json_roundtrip(parsed_pillar_scene):
    mesh, nav, scene = parsed_pillar_scene
    ts = plan_all(mesh, nav, scene.landmarks, scene.depth, seed=0)
    d = ts.to_dict()
    back = TrajectorySet.from_dict(d)
    assert back.to_dict() == d
    text = ts.to_camera_list()
    lines = [l for l in text.splitlines() if l]
    assert len(lines) == sum(len(t.frames) for t in ts.all_trajectories())
    assert all(len(l.split()) == 12 for l in lines)


def test_trajectory_step_bound(parsed_pillar_scene):
    mesh, nav, scene = parsed_pillar_scene
    cfg = PlannerConfig()
    ts = plan_all(mesh, nav, scene.landmarks, scene.depth, cfg, seed=0)
    for t in ts.all_trajectories():
        pts = t.positions()
        steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        assert steps.max() <= cfg.max_step + 1e-9
