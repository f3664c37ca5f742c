"""Masked front-to-back alpha compositing and existence-mask sampling.

Per-pixel splat lists composite as

    color = sum_k M_k c_k sigma_k T_k,    T_{k+1} = T_k (1 - M_k sigma_k)

with T_1 = 1. A masked-out entry (M_k = 0) contributes no color and leaves
the transmittance untouched, so deleting it is bit-exact equivalent to
keeping it. Masks are sampled from two-class logits via straight-through
Gumbel perturbation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError


@dataclass
class PixelGaussianList:
    """Splat entries covering one pixel, ordered front to back by depth."""

    opacity: np.ndarray  # (N,) in [0, 1]
    color: np.ndarray  # (N, 3) in [0, 1]
    mask: np.ndarray  # (N,) in {0, 1} or probabilities in [0, 1]
    depth: np.ndarray | None = None  # optional (N,) for order validation

    def __post_init__(self):
        self.opacity = np.asarray(self.opacity, dtype=np.float64).reshape(-1)
        self.color = np.asarray(self.color, dtype=np.float64).reshape(-1, 3)
        self.mask = np.asarray(self.mask, dtype=np.float64).reshape(-1)
        n = len(self.opacity)
        if len(self.color) != n or len(self.mask) != n:
            raise InputError("opacity, color, and mask lengths must agree")
        if np.any(self.opacity < 0) or np.any(self.opacity > 1):
            raise InputError("opacities must lie in [0, 1]")
        if np.any(self.mask < 0) or np.any(self.mask > 1):
            raise InputError("masks must lie in [0, 1]")
        if self.depth is not None:
            self.depth = np.asarray(self.depth, dtype=np.float64).reshape(-1)
            if len(self.depth) != n:
                raise InputError("depth length must agree with entries")
            if np.any(np.diff(self.depth) < 0):
                raise InputError("entries must be ordered front to back")

    def __len__(self) -> int:
        return len(self.opacity)


def composite_masked(entries: PixelGaussianList):
    """Composite one pixel's list; returns (color, final transmittance).

    Accumulation is strictly sequential so that dropping masked-out entries
    reproduces bit-identical results.
    """
    color = np.zeros(3)
    t = 1.0
    for k in range(len(entries)):
        m = entries.mask[k]
        a = m * entries.opacity[k]
        color = color + entries.color[k] * (a * t)
        t = t * (1.0 - a)
    return color, t


def composite_unmasked(opacity, color):
    """Classical front-to-back alpha compositing (no masks)."""
    opacity = np.asarray(opacity, dtype=np.float64)
    color = np.asarray(color, dtype=np.float64)
    out = np.zeros(3)
    t = 1.0
    for k in range(len(opacity)):
        out = out + color[k] * (opacity[k] * t)
        t = t * (1.0 - opacity[k])
    return out, t


def sample_gumbel_mask(logits, temperature: float, seed: int = 0) -> np.ndarray:
    """Straight-through categorical sample of binary masks.

    ``logits`` is (N, 2): column 0 scores mask-on, column 1 mask-off. Each
    row receives independent Gumbel noise; the perturbed scores are divided
    by ``temperature`` and the argmax becomes the hard sample, so low
    temperatures concentrate the soft relaxation on the winning class.
    """
    if temperature <= 0:
        raise InputError(f"temperature must be positive, got {temperature}")
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[1] != 2:
        raise InputError("logits must have shape (N, 2)")
    rng = np.random.default_rng(seed)
    u = rng.uniform(low=np.finfo(float).tiny, high=1.0, size=logits.shape)
    g = -np.log(-np.log(u))
    perturbed = (logits + g) / temperature
    return (perturbed[:, 0] > perturbed[:, 1]).astype(np.float64)


def deterministic_masks(probabilities) -> np.ndarray:
    """Evaluation-mode masks: threshold activation probabilities at 0.5."""
    p = np.asarray(probabilities, dtype=np.float64)
    if np.any(p < 0) or np.any(p > 1):
        raise InputError("mask probabilities must lie in [0, 1]")
    return (p >= 0.5).astype(np.float64)


def mask_sparsity_loss(masks, lambda_m: float) -> float:
    """Squared mean-activation penalty: lambda_m * mean(M)^2."""
    masks = np.asarray(masks, dtype=np.float64)
    if masks.size == 0:
        raise InputError("mask sparsity loss needs at least one mask")
    return float(lambda_m * np.mean(masks) ** 2)


def scale_ratio_penalty(scales, r_cap: float = 10.0) -> float:
    """Mean hinge on per-splat anisotropy: mean((max/min scale - r_cap)+).

    ``scales`` is (N, 3) positive scale triples.
    """
    scales = np.asarray(scales, dtype=np.float64).reshape(-1, 3)
    if np.any(scales <= 0):
        raise InputError("scales must be positive")
    ratio = scales.max(axis=1) / scales.min(axis=1)
    return float(np.mean(np.maximum(ratio - r_cap, 0.0)))
