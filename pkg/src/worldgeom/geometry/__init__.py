"""Core geometry: cameras, depth/normal maps, point clouds, meshes, panoramas."""

from .camera import (
    Camera,
    DepthMap,
    NormalMap,
    backproject_depth,
    depth_to_normal,
    edge_floater_mask,
    look_at_rotation,
    render_depth,
)
from .mesh import (
    RaycastScene,
    TriangleMesh,
    build_panoramic_mesh,
    interpolate_vertex_colors,
    raycast,
    render_mesh_depth,
    stretch_edge_ratios,
)
from .panorama import (
    PanoramaImage,
    direction_to_lonlat,
    erp_backproject,
    erp_pixel_lonlat,
    erp_seam_blend,
    erp_to_perspective,
    lonlat_to_direction,
    perspective_camera,
    sample_erp,
    sample_erp_nearest,
)
from .pointcloud import PointCloud, merge_pointclouds, voxel_downsample

__all__ = [
    "Camera",
    "DepthMap",
    "NormalMap",
    "PanoramaImage",
    "PointCloud",
    "RaycastScene",
    "TriangleMesh",
    "backproject_depth",
    "build_panoramic_mesh",
    "depth_to_normal",
    "direction_to_lonlat",
    "edge_floater_mask",
    "erp_backproject",
    "erp_pixel_lonlat",
    "erp_seam_blend",
    "erp_to_perspective",
    "lonlat_to_direction",
    "look_at_rotation",
    "merge_pointclouds",
    "perspective_camera",
    "interpolate_vertex_colors",
    "raycast",
    "render_depth",
    "render_mesh_depth",
    "sample_erp",
    "sample_erp_nearest",
    "stretch_edge_ratios",
    "voxel_downsample",
]
