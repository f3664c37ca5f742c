"""worldgeom: deterministic geometry toolkit for panoramic world composition.

Subpackages and modules:
  geometry    cameras, depth/normal maps, point clouds, meshes, panoramas
  navmesh     walkable-grid construction, refinement, Dijkstra queries
  planner     five-mode camera trajectory generation
  depth_align RANSAC disparity alignment and anchor-based outlier revision
  compose     masked splat compositing, loss kernels, TSDF meshing
  resolution  normalized rotary coordinates, token budgets, sample packing
  synth       analytic scene fixtures
  cli         pipeline commands
"""

__version__ = "0.1.0"

from . import compose, depth_align, geometry, navmesh, planner, resolution, synth
from .config import PipelineConfig

__all__ = [
    "PipelineConfig",
    "compose",
    "depth_align",
    "geometry",
    "navmesh",
    "planner",
    "resolution",
    "synth",
    "__version__",
]
