import numpy as np
import pytest

from worldgeom.compose import TSDFVolume, extract_mesh, tsdf_integrate
from worldgeom.errors import InputError
from worldgeom.geometry import Camera, DepthMap


def plane_camera(size=64, f=64.0):
    return Camera(fx=f, fy=f, cx=size / 2, cy=size / 2, width=size, height=size)


def plane_volume():
    return TSDFVolume.from_bounds(
        lo=(-0.8, -0.8, 1.5), hi=(0.8, 0.8, 2.5), voxel_size=0.05
    )


def test_integrate_plane_zero_crossing():
    cam = plane_camera()
    vol = plane_volume()
    depth = DepthMap(values=np.full((64, 64), 2.0))
    tsdf_integrate(vol, depth, None, cam)
    centers = vol.voxel_centers()
    observed = vol.weight > 0
    # signed distance flips sign within one voxel of z = 2
    near = observed & (np.abs(centers[..., 2] - 2.0) < 0.5 * vol.voxel_size)
    assert np.all(np.abs(vol.sdf[near]) <= vol.voxel_size)
    below = observed & (centers[..., 2] < 2.0 - vol.truncation)
    assert np.all(vol.sdf[below] >= vol.truncation - 1e-9)


def test_integrate_twice_doubles_weights_only():
    cam = plane_camera()
    depth = DepthMap(values=np.full((64, 64), 2.0))
    v1 = plane_volume()
    tsdf_integrate(v1, depth, None, cam)
    v2 = plane_volume()
    tsdf_integrate(v2, depth, None, cam)
    tsdf_integrate(v2, depth, None, cam)
    assert np.allclose(v2.sdf, v1.sdf)
    assert np.allclose(v2.weight, 2.0 * v1.weight)


def test_integrate_invalid_depth_is_noop():
    cam = plane_camera()
    vol = plane_volume()
    depth = DepthMap(values=np.ones((64, 64)), valid=np.zeros((64, 64), bool))
    tsdf_integrate(vol, depth, None, cam)
    assert not np.any(vol.weight > 0)


def test_extract_requires_observations():
    with pytest.raises(InputError):
        extract_mesh(plane_volume())


def test_sphere_from_analytic_sdf():
    vol = TSDFVolume.from_bounds(
        lo=(-1.2, -1.2, -1.2), hi=(1.2, 1.2, 1.2), voxel_size=0.05
    )
    centers = vol.voxel_centers()
    vol.fill_sdf(np.linalg.norm(centers, axis=-1) - 1.0)
    mesh = extract_mesh(vol)
    radii = np.linalg.norm(mesh.vertices, axis=1)
    assert abs(radii.mean() - 1.0) < 0.05
    assert np.abs(radii - 1.0).max() < 0.05


def test_plane_fusion_extracts_planar_mesh():
    cam = plane_camera()
    vol = plane_volume()
    depth = DepthMap(values=np.full((64, 64), 2.0))
    tsdf_integrate(vol, depth, None, cam)
    mesh = extract_mesh(vol)
    assert mesh.n_faces > 0
    assert np.abs(mesh.vertices[:, 2] - 2.0).max() < vol.voxel_size


def test_small_component_filter():
    vol = TSDFVolume.from_bounds(lo=(-1, -1, -1), hi=(1, 1, 1), voxel_size=0.1)
    centers = vol.voxel_centers()
    main = np.linalg.norm(centers - np.array([0, 0, 0.4]), axis=-1) - 0.45
    floater = np.linalg.norm(centers - np.array([0, 0, -0.7]), axis=-1) - 0.12
    vol.fill_sdf(np.minimum(main, floater))
    full = extract_mesh(vol, min_component_faces=0)
    filtered = extract_mesh(vol, min_component_faces=60)
    assert filtered.n_faces < full.n_faces
    assert filtered.vertices[:, 2].min() > -0.3  # floater gone


def test_color_integration_carries_to_vertices():
    cam = plane_camera()
    vol = plane_volume()
    depth = DepthMap(values=np.full((64, 64), 2.0))
    color = np.zeros((64, 64, 3))
    color[..., 0] = 1.0
    tsdf_integrate(vol, depth, color, cam)
    mesh = extract_mesh(vol)
    assert mesh.vertex_colors is not None
    assert mesh.vertex_colors[:, 0].mean() > 0.5


def test_simplification_reduces_faces():
    vol = TSDFVolume.from_bounds(lo=(-1.2,) * 3, hi=(1.2,) * 3, voxel_size=0.08)
    centers = vol.voxel_centers()
    vol.fill_sdf(np.linalg.norm(centers, axis=-1) - 1.0)
    full = extract_mesh(vol)
    slim = extract_mesh(vol, simplify_target_faces=full.n_faces // 3)
    assert slim.n_faces < full.n_faces
    # simplified sphere stays a sphere
    radii = np.linalg.norm(slim.vertices, axis=1)
    assert np.abs(radii - 1.0).max() < 0.15
