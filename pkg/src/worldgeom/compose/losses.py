"""Loss kernels for scene composition: photometric, geometric, derived-normal,
and per-pixel validity objectives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from ..errors import InputError, UndefinedLossError
from ..geometry.camera import Camera, DepthMap, NormalMap, depth_to_normal


@dataclass
class LossWeights:
    lambda_c1: float = 0.2  # DSSIM share of the photometric loss
    lambda_c2: float = 0.0  # reserved for a perceptual term; unused
    lambda_d: float = 0.5
    lambda_n: float = 0.1
    lambda_m: float = 0.05

    def __post_init__(self):
        for name in ("lambda_c1", "lambda_c2", "lambda_d", "lambda_n", "lambda_m"):
            if getattr(self, name) < 0:
                raise InputError(f"{name} must be >= 0")
        if self.lambda_c1 > 1:
            raise InputError("lambda_c1 must be <= 1")


def ssim(a: np.ndarray, b: np.ndarray, data_range: float = 1.0) -> float:
    """Mean structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Standard constants K1=0.01, K2=0.03; population covariances; border
    pixels inside the filter radius are cropped from the mean. Multichannel
    inputs average SSIM over channels.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InputError("SSIM inputs must share a shape")
    if a.ndim == 3:
        return float(np.mean([ssim(a[..., c], b[..., c], data_range) for c in range(a.shape[2])]))
    sigma = 1.5
    truncate = 3.5  # 11x11 kernel: radius = int(3.5 * 1.5 + 0.5) = 5
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2

    def filt(x):
        return gaussian_filter(x, sigma=sigma, truncate=truncate)

    mu_a = filt(a)
    mu_b = filt(b)
    var_a = filt(a * a) - mu_a * mu_a
    var_b = filt(b * b) - mu_b * mu_b
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    smap = num / den
    pad = int(truncate * sigma + 0.5)
    if smap.shape[0] > 2 * pad and smap.shape[1] > 2 * pad:
        smap = smap[pad:-pad, pad:-pad]
    return float(smap.mean())


def photometric_loss(rendered: np.ndarray, target: np.ndarray, lambda_c1: float) -> float:
    """(1 - lambda_c1) * L1 + lambda_c1 * (1 - SSIM)."""
    rendered = np.asarray(rendered, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if rendered.shape != target.shape:
        raise InputError(
            f"rendered {rendered.shape} and target {target.shape} dimensions differ"
        )
    l1 = float(np.mean(np.abs(rendered - target)))
    if lambda_c1 == 0.0:
        return l1
    dssim = 1.0 - ssim(rendered, target)
    return (1.0 - lambda_c1) * l1 + lambda_c1 * dssim


def geometric_loss(
    d_hat: DepthMap,
    d_ref: DepthMap,
    n_hat: NormalMap | None,
    n_ref: NormalMap | None,
    lambda_d: float,
    lambda_n: float,
) -> float:
    """lambda_d * mean|d_hat - d_ref| + lambda_n * mean(1 - cos(n_hat, n_ref)).

    Each term averages over the intersection of its inputs' validity masks;
    an enabled term with empty support raises UndefinedLossError.
    """
    total = 0.0
    if lambda_d > 0:
        if d_hat.values.shape != d_ref.values.shape:
            raise InputError("depth map dimensions differ")
        both = d_hat.valid & d_ref.valid
        if not np.any(both):
            raise UndefinedLossError("no valid pixels for the depth term")
        total += lambda_d * float(np.mean(np.abs(d_hat.values[both] - d_ref.values[both])))
    if lambda_n > 0:
        if n_hat is None or n_ref is None:
            raise InputError("normal maps required when lambda_n > 0")
        if n_hat.vectors.shape != n_ref.vectors.shape:
            raise InputError("normal map dimensions differ")
        both = n_hat.valid & n_ref.valid
        if not np.any(both):
            raise UndefinedLossError("no valid pixels for the normal term")
        cos = np.sum(n_hat.vectors[both] * n_ref.vectors[both], axis=-1)
        total += lambda_n * float(np.mean(1.0 - cos))
    return total


def depth_to_normal_loss(depth: DepthMap, cam: Camera, target: NormalMap) -> float:
    """Mean angular error (radians) between depth-derived and target normals."""
    if target.vectors.shape[:2] != depth.values.shape:
        raise InputError("target normal dimensions differ from the depth map")
    derived = depth_to_normal(depth, cam)
    both = derived.valid & target.valid
    if not np.any(both):
        raise UndefinedLossError("no valid pixels shared by derived and target normals")
    dots = np.clip(np.sum(derived.vectors[both] * target.vectors[both], axis=-1), -1.0, 1.0)
    return float(np.mean(np.arccos(dots)))


def validity_bce_loss(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Numerically stable sigmoid binary cross-entropy over masked pixels.

    Uses the log-sum-exp form max(l, 0) - l*y + log(1 + exp(-|l|)).
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if logits.shape != labels.shape:
        raise InputError("logits and labels must share a shape")
    if mask is None:
        mask = np.ones(logits.shape, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != logits.shape:
            raise InputError("mask dimensions differ from logits")
    if not np.any(mask):
        raise UndefinedLossError("BCE over an empty mask")
    l = logits[mask]
    y = labels[mask]
    loss = np.maximum(l, 0.0) - l * y + np.log1p(np.exp(-np.abs(l)))
    return float(np.mean(loss))
