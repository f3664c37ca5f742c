import numpy as np
import pytest

from worldgeom.errors import InputError
from worldgeom.geometry import (
    Camera,
    DepthMap,
    PointCloud,
    backproject_depth,
    depth_to_normal,
    edge_floater_mask,
    render_depth,
)


def square_cam(f=100.0, size=101, pose=None):
    rot = np.eye(3) if pose is None else pose[0]
    tr = np.zeros(3) if pose is None else pose[1]
    return Camera(
        fx=f, fy=f, cx=size / 2.0, cy=size / 2.0, width=size, height=size,
        rotation=rot, translation=tr,
    )


def test_backproject_principal_point_ray():
    # single pixel centered on the principal point, depth 1 -> (0, 0, 1)
    cam = Camera(fx=1, fy=1, cx=0.5, cy=0.5, width=1, height=1)
    pc = backproject_depth(DepthMap(values=np.array([[1.0]])), cam)
    assert np.allclose(pc.positions, [[0.0, 0.0, 1.0]])


def test_backproject_pinhole_arithmetic():
    cam = square_cam()
    vals = np.full((101, 101), np.nan)
    vals[50, 50] = 2.0  # center (50.5, 50.5) = principal point
    vals[50, 60] = 2.0  # 10 px right: x = (60.5-50.5)/100*2 = 0.2
    depth = DepthMap(values=np.where(np.isfinite(vals), vals, 1.0), valid=np.isfinite(vals))
    pc = backproject_depth(depth, cam)
    assert np.allclose(pc.positions, [[0.0, 0.0, 2.0], [0.2, 0.0, 2.0]])


def test_backproject_dimension_mismatch():
    cam = square_cam(size=32)
    with pytest.raises(InputError):
        backproject_depth(DepthMap(values=np.ones((16, 16))), cam)


def test_render_depth_inverse_of_backprojection():
    cam = square_cam()
    pc = PointCloud(positions=[[0.0, 0.0, 2.0]])
    dm = render_depth(pc, cam)
    assert dm.valid[50, 50]
    assert dm.values[50, 50] == pytest.approx(2.0)
    assert dm.valid.sum() == 1


def test_render_depth_nearest_wins():
    cam = square_cam()
    dm = render_depth(PointCloud(positions=[[0, 0, 3.0], [0, 0, 2.0]]), cam)
    assert dm.values[50, 50] == pytest.approx(2.0)


def test_render_depth_behind_camera_and_empty():
    cam = square_cam()
    assert render_depth(PointCloud(positions=[[0, 0, -2.0]]), cam).valid.sum() == 0
    assert render_depth(PointCloud(positions=np.zeros((0, 3))), cam).valid.sum() == 0


def test_render_backproject_round_trip():
    rng = np.random.default_rng(7)
    cam = square_cam(f=80.0, size=64)
    vals = rng.uniform(1.0, 5.0, size=(64, 64))
    depth = DepthMap(values=vals)
    pc = backproject_depth(depth, cam)
    back = render_depth(pc, cam, splat_radius=1)
    assert back.valid.all()
    assert np.max(np.abs(back.values - vals)) < 1e-4


def test_backproject_rigid_equivariance():
    rng = np.random.default_rng(3)
    cam = square_cam(f=50.0, size=32)
    depth = DepthMap(values=rng.uniform(0.5, 4.0, size=(32, 32)))
    pc0 = backproject_depth(depth, cam)

    # random rigid transform applied to the camera pose
    a = rng.normal(size=(3, 3))
    q, _ = np.linalg.qr(a)
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    t0 = rng.normal(size=3)
    cam2 = Camera(
        fx=cam.fx, fy=cam.fy, cx=cam.cx, cy=cam.cy,
        width=cam.width, height=cam.height,
        rotation=q @ cam.rotation, translation=q @ cam.translation + t0,
    )
    pc1 = backproject_depth(depth, cam2)
    assert np.max(np.abs(pc1.positions - (pc0.positions @ q.T + t0))) < 1e-6


def test_depth_to_normal_flat_plane():
    cam = square_cam(f=40.0, size=32)
    nm = depth_to_normal(DepthMap(values=np.full((32, 32), 2.0)), cam)
    assert nm.valid.all()
    assert np.allclose(nm.vectors, [0.0, 0.0, -1.0], atol=1e-9)


@pytest.mark.parametrize("slope", [(0.1, 0.0), (0.0, 0.15), (-0.08, 0.12)])
def test_depth_to_normal_affine_plane(slope):
    # plane z = 1 + a*x + b*y in camera space; interior normals within 1 deg
    a, b = slope
    cam = square_cam(f=40.0, size=32)
    rays = cam.pixel_rays()
    denom = 1.0 - a * rays[..., 0] - b * rays[..., 1]
    depth = DepthMap(values=1.0 / denom)
    nm = depth_to_normal(depth, cam)
    ana = np.array([a, b, -1.0])
    ana /= np.linalg.norm(ana)
    inner = nm.vectors[4:-4, 4:-4]
    dots = np.clip(inner @ ana, -1, 1)
    assert np.degrees(np.arccos(dots)).max() < 1.0


def test_depth_to_normal_isolated_pixel_invalid():
    vals = np.full((9, 9), np.nan)
    vals[4, 4] = 2.0
    depth = DepthMap(values=np.where(np.isfinite(vals), vals, 1.0), valid=np.isfinite(vals))
    nm = depth_to_normal(depth, square_cam(f=10.0, size=9))
    assert not nm.valid[4, 4]
    assert nm.valid.sum() == 0


def test_camera_invariants():
    with pytest.raises(InputError):
        Camera(fx=-1, fy=1, cx=0, cy=0, width=4, height=4)
    with pytest.raises(InputError):
        Camera(fx=1, fy=1, cx=0, cy=0, width=4, height=4, rotation=np.eye(3) * 2)
    flip = np.diag([1.0, 1.0, -1.0])  # det -1
    with pytest.raises(InputError):
        Camera(fx=1, fy=1, cx=0, cy=0, width=4, height=4, rotation=flip)


def test_edge_floater_mask_flags_jump():
    vals = np.full((8, 8), 1.0)
    vals[:, 4:] = 2.0  # 100% relative jump at the boundary
    flags = edge_floater_mask(DepthMap(values=vals), rel_jump=0.2)
    assert flags[:, 3].all() and flags[:, 4].all()
    assert not flags[:, :3].any() and not flags[:, 5:].any()
