"""Composition-stage kernels: masked compositing, losses, TSDF meshing."""

from .compositing import (
    PixelGaussianList,
    composite_masked,
    composite_unmasked,
    deterministic_masks,
    mask_sparsity_loss,
    sample_gumbel_mask,
    scale_ratio_penalty,
)
from .losses import (
    LossWeights,
    depth_to_normal_loss,
    geometric_loss,
    photometric_loss,
    ssim,
    validity_bce_loss,
)
from .tsdf import TSDFVolume, extract_mesh, tsdf_integrate

__all__ = [
    "LossWeights",
    "PixelGaussianList",
    "TSDFVolume",
    "composite_masked",
    "composite_unmasked",
    "deterministic_masks",
    "depth_to_normal_loss",
    "extract_mesh",
    "geometric_loss",
    "mask_sparsity_loss",
    "photometric_loss",
    "sample_gumbel_mask",
    "scale_ratio_penalty",
    "ssim",
    "tsdf_integrate",
    "validity_bce_loss",
]
