"""Robust per-frame depth alignment against the panoramic point cloud.

Estimated depth maps arrive with unknown scale/shift relative to the scene.
For every frame a sparse guidance depth (the panoramic cloud rendered into
that camera) supervises a RANSAC linear fit in disparity space:

    1 / d_aligned = gamma * (1 / d_estimated) + beta

fitted over the reliability mask. Frames whose coefficients deviate from the
global consensus at anchor depths are flagged and revised from their nearest
in-sequence neighbor; fully deviant sequences are discarded. Finally the
aligned depths are back-projected and merged into the panoramic cloud.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, InsufficientSupportError
from .geometry.camera import Camera, DepthMap, NormalMap, backproject_depth, edge_floater_mask
from .geometry.pointcloud import PointCloud, merge_pointclouds, voxel_downsample

DISP_EPS = 1e-6  # disparity floor guarding 1/d


@dataclass
class AlignConfig:
    tau_conf: float = 0.1  # confidence threshold for the estimate mask
    floater_rel_jump: float = 0.2
    percentile_band: tuple = (5.0, 95.0)
    ransac_iters: int = 512
    ransac_rel_inlier: float = 0.02  # inlier epsilon = this * median disparity
    min_support: int = 200
    anchor_count: int = 9
    outlier_percentile: float = 90.0
    outlier_min_dev: float = 1e-6  # deviations below this never flag
    depth_range_percentiles: tuple = (1.0, 99.0)
    per_sequence_percentile: bool = False


@dataclass
class ReliabilityMask:
    """Combined alignment mask with its diagnostic sub-masks."""

    combined: np.ndarray
    sub_masks: dict = field(default_factory=dict)

    def __post_init__(self):
        self.combined = np.asarray(self.combined, dtype=bool)
        expect = self.combined.copy()
        expect[:] = True
        for m in self.sub_masks.values():
            expect &= m
        if not np.array_equal(expect, self.combined):
            raise InputError("combined mask must equal the AND of its sub-masks")

    @property
    def width(self) -> int:
        return self.combined.shape[1]

    @property
    def height(self) -> int:
        return self.combined.shape[0]


@dataclass
class AlignCoeff:
    frame_id: int
    gamma: float  # disparity scale
    beta: float  # disparity shift
    inlier_ratio: float
    outlier: bool = False
    revised_from: int | None = None
    discarded_sequence: bool = False

    def __post_init__(self):
        if not (0.0 <= self.inlier_ratio <= 1.0):
            raise InputError("inlier_ratio must lie in [0, 1]")


@dataclass
class AnchorStats:
    anchors: np.ndarray  # (Q,) strictly increasing anchor depths, meters
    values: np.ndarray  # (F, Q) transformed anchor disparities per frame
    medians: np.ndarray  # (Q,) per-anchor medians over frames
    max_rel_dev: np.ndarray  # (F,) max relative deviation per frame

    def __post_init__(self):
        if np.any(np.diff(self.anchors) <= 0):
            raise InputError("anchor depths must be strictly increasing")


def build_reliability_mask(
    d_m: DepthMap,
    d_g: DepthMap,
    n_m: NormalMap | None,
    n_g: NormalMap | None,
    conf: np.ndarray | None,
    sky: np.ndarray | None,
    cfg: AlignConfig | None = None,
) -> ReliabilityMask:
    """Intersect the empirical validity masks for one frame.

    m_conf: estimate valid, confidence >= tau, not an edge floater.
    g_valid: guidance valid and not an edge floater.
    normal_consistent: angle between the two normals <= 90 degrees wherever
    both are valid (pixels lacking either normal pass).
    percentile_pass: the ratio d_m/d_g stays within the configured
    percentile band of its distribution over both-valid pixels.
    non_sky: the sky mask is off.
    """
    cfg = cfg or AlignConfig()
    shape = d_m.values.shape
    for name, other in (("guidance depth", d_g.values.shape),):
        if other != shape:
            raise InputError(f"{name} dimensions {other} differ from estimate {shape}")
    m_conf = d_m.valid & ~edge_floater_mask(d_m, cfg.floater_rel_jump)
    if conf is not None:
        conf = np.asarray(conf, dtype=np.float64)
        if conf.shape != shape:
            raise InputError("confidence dimensions differ from the estimate")
        m_conf &= conf >= cfg.tau_conf
    g_valid = d_g.valid & ~edge_floater_mask(d_g, cfg.floater_rel_jump)

    normal_consistent = np.ones(shape, dtype=bool)
    if n_m is not None and n_g is not None:
        if n_m.vectors.shape[:2] != shape or n_g.vectors.shape[:2] != shape:
            raise InputError("normal map dimensions differ from the estimate")
        both = n_m.valid & n_g.valid
        dots = np.sum(n_m.vectors * n_g.vectors, axis=-1)
        normal_consistent = ~(both & (dots < 0.0))

    percentile_pass = np.ones(shape, dtype=bool)
    both_depth = d_m.valid & d_g.valid
    if np.any(both_depth):
        ratio = np.zeros(shape)
        ratio[both_depth] = d_m.values[both_depth] / d_g.values[both_depth]
        lo, hi = np.percentile(ratio[both_depth], cfg.percentile_band)
        percentile_pass = ~(both_depth & ((ratio < lo) | (ratio > hi)))

    non_sky = np.ones(shape, dtype=bool)
    if sky is not None:
        sky = np.asarray(sky, dtype=bool)
        if sky.shape != shape:
            raise InputError("sky mask dimensions differ from the estimate")
        non_sky = ~sky

    subs = {
        "m_conf": m_conf,
        "g_valid": g_valid,
        "normal_consistent": normal_consistent,
        "percentile_pass": percentile_pass,
        "non_sky": non_sky,
    }
    combined = m_conf & g_valid & normal_consistent & percentile_pass & non_sky
    return ReliabilityMask(combined=combined, sub_masks=subs)


def fit_scale_shift(
    d_m: DepthMap,
    d_g: DepthMap,
    mask: ReliabilityMask | np.ndarray,
    cfg: AlignConfig | None = None,
    seed: int = 0,
    frame_id: int = 0,
) -> AlignCoeff:
    """2-point RANSAC line fit of guidance disparity onto estimate disparity.

    Pixels are canonicalized by sorting the (x, y) disparity pairs before
    sampling, so the fit is invariant to pixel ordering. The best consensus
    set is refit by least squares. Raises InsufficientSupportError when the
    mask holds fewer than ``min_support`` pixels.
    """
    cfg = cfg or AlignConfig()
    m = mask.combined if isinstance(mask, ReliabilityMask) else np.asarray(mask, bool)
    m = m & d_m.valid & d_g.valid
    n = int(m.sum())
    if n < cfg.min_support:
        raise InsufficientSupportError(
            f"frame {frame_id}: {n} reliable pixels < min_support {cfg.min_support}"
        )
    x = 1.0 / d_m.values[m]
    y = 1.0 / d_g.values[m]
    order = np.lexsort((y, x))
    x, y = x[order], y[order]

    eps = cfg.ransac_rel_inlier * float(np.median(y))
    rng = np.random.default_rng(seed)
    i1 = rng.integers(0, n, size=cfg.ransac_iters)
    i2 = rng.integers(0, n, size=cfg.ransac_iters)
    dx = x[i2] - x[i1]
    ok = np.abs(dx) > 1e-12
    gam = np.zeros(cfg.ransac_iters)
    gam[ok] = (y[i2] - y[i1])[ok] / dx[ok]
    bet = y[i1] - gam * x[i1]
    counts = np.full(cfg.ransac_iters, -1, dtype=np.int64)
    chunk = max(1, int(4e6 / n))
    for s in range(0, cfg.ransac_iters, chunk):
        e = min(s + chunk, cfg.ransac_iters)
        resid = np.abs(y[None, :] - gam[s:e, None] * x[None, :] - bet[s:e, None])
        counts[s:e] = np.where(ok[s:e], np.count_nonzero(resid <= eps, axis=1), -1)
    best = int(np.argmax(counts))
    if counts[best] < 2:
        # every sampled pair was degenerate (constant disparity); fall back
        # to a pure scale through the medians
        gamma = float(np.median(y) / np.median(x))
        beta = 0.0
    else:
        inliers = np.abs(y - gam[best] * x - bet[best]) <= eps
        a = np.stack([x[inliers], np.ones(int(inliers.sum()))], axis=1)
        sol, *_ = np.linalg.lstsq(a, y[inliers], rcond=None)
        gamma, beta = float(sol[0]), float(sol[1])
    if gamma <= 0:
        raise InsufficientSupportError(
            f"frame {frame_id}: degenerate fit (gamma={gamma:.4g} <= 0)"
        )
    inliers = np.abs(y - gamma * x - beta) <= eps
    return AlignCoeff(
        frame_id=frame_id,
        gamma=gamma,
        beta=beta,
        inlier_ratio=float(inliers.sum()) / n,
    )


def anchor_stats(coeffs: list, depth_range: tuple, count: int = 9) -> AnchorStats:
    """Transformed anchor values and per-frame max relative deviation.

    Anchors are ``count`` depths uniform over ``depth_range``; each frame's
    coefficients map the anchor disparities linearly, and the deviation of
    frame i is max_q |(V_iq - median_q) / median_q|.
    """
    lo, hi = depth_range
    if not (0 < lo < hi):
        raise InputError(f"invalid depth range ({lo}, {hi})")
    anchors = np.linspace(lo, hi, count)
    disp = 1.0 / anchors
    values = np.array([[c.gamma * a + c.beta for a in disp] for c in coeffs])
    medians = np.median(values, axis=0)
    safe = np.where(np.abs(medians) < 1e-12, 1e-12, medians)
    dev = np.abs((values - medians[None, :]) / safe[None, :])
    return AnchorStats(
        anchors=anchors, values=values, medians=medians, max_rel_dev=dev.max(axis=1)
    )


def detect_and_revise_outliers(
    coeffs: list,
    depth_range: tuple,
    sequence_ids: list,
    cfg: AlignConfig | None = None,
) -> list:
    """Flag frames whose anchor deviation exceeds the percentile threshold.

    Flagged frames copy the coefficients of the nearest unflagged frame in
    the same sequence (ties to the earlier frame); sequences with every frame
    flagged are marked discarded. Deviations under ``outlier_min_dev`` never
    flag: numerically indistinguishable coefficients (e.g. float32 file
    round-trips) stay accepted even though a strict percentile would always
    single out the largest of them. Returns new AlignCoeff objects; the
    input list is untouched.
    """
    cfg = cfg or AlignConfig()
    if len(coeffs) < 2:
        raise InputError("outlier revision needs at least two frames")
    if len(sequence_ids) != len(coeffs):
        raise InputError("sequence_ids length differs from coeffs")
    stats = anchor_stats(coeffs, depth_range, cfg.anchor_count)
    dev = stats.max_rel_dev
    seq = np.asarray(sequence_ids)
    flagged = np.zeros(len(coeffs), dtype=bool)
    if cfg.per_sequence_percentile:
        for s in np.unique(seq):
            sel = seq == s
            thr = np.percentile(dev[sel], cfg.outlier_percentile)
            flagged[sel] = dev[sel] > max(thr, cfg.outlier_min_dev)
    else:
        thr = np.percentile(dev, cfg.outlier_percentile)
        flagged = dev > max(thr, cfg.outlier_min_dev)

    out = []
    for i, c in enumerate(coeffs):
        if not flagged[i]:
            out.append(
                AlignCoeff(
                    frame_id=c.frame_id,
                    gamma=c.gamma,
                    beta=c.beta,
                    inlier_ratio=c.inlier_ratio,
                )
            )
            continue
        donors = [
            j for j in range(len(coeffs)) if seq[j] == seq[i] and not flagged[j]
        ]
        if donors:
            j = min(donors, key=lambda j: (abs(j - i), j))
            out.append(
                AlignCoeff(
                    frame_id=c.frame_id,
                    gamma=coeffs[j].gamma,
                    beta=coeffs[j].beta,
                    inlier_ratio=c.inlier_ratio,
                    outlier=True,
                    revised_from=coeffs[j].frame_id,
                )
            )
        else:
            out.append(
                AlignCoeff(
                    frame_id=c.frame_id,
                    gamma=c.gamma,
                    beta=c.beta,
                    inlier_ratio=c.inlier_ratio,
                    outlier=True,
                    discarded_sequence=True,
                )
            )
    return out


def apply_alignment(d_m: DepthMap, coeff: AlignCoeff) -> DepthMap:
    """Map estimated depth through the fitted disparity transform.

    d_a = 1 / (gamma / d_m + beta); pixels whose transformed disparity drops
    to or below the disparity floor become invalid.
    """
    if coeff.discarded_sequence:
        raise InputError(
            f"frame {coeff.frame_id}: coefficients belong to a discarded sequence"
        )
    disp = np.zeros_like(d_m.values)
    disp[d_m.valid] = coeff.gamma / d_m.values[d_m.valid] + coeff.beta
    valid = d_m.valid & (disp > DISP_EPS)
    values = np.ones_like(d_m.values)
    values[valid] = 1.0 / disp[valid]
    return DepthMap(values=values, valid=valid)


def guidance_depth_range(frames: list, cfg: AlignConfig | None = None) -> tuple:
    """Scene depth range for anchors: percentiles of all guidance depths."""
    cfg = cfg or AlignConfig()
    pool = np.concatenate([d.values[d.valid] for d in frames if np.any(d.valid)])
    if pool.size == 0:
        raise InputError("no valid guidance depths to derive a range from")
    lo, hi = np.percentile(pool, cfg.depth_range_percentiles)
    if hi <= lo:
        hi = lo * (1.0 + 1e-6)
    return float(lo), float(hi)


def expand_pointcloud(
    pano_pc: PointCloud,
    aligned: list,
    voxel: float,
) -> PointCloud:
    """Union of the panoramic cloud and back-projected aligned frames.

    ``aligned`` holds (DepthMap, Camera, mask-or-None) triples; each frame
    contributes its valid-and-masked pixels. The merged cloud is voxel
    downsampled to the requested resolution.
    """
    if voxel <= 0:
        raise InputError("voxel size must be positive")
    extras = []
    for depth, cam, m in aligned:
        keep = depth.valid if m is None else depth.valid & np.asarray(m, dtype=bool)
        clipped = DepthMap(values=depth.values, valid=keep)
        pc = backproject_depth(clipped, cam)
        if len(pc):
            extras.append(PointCloud(positions=pc.positions))
    base = PointCloud(positions=pano_pc.positions)
    merged = merge_pointclouds(base, extras)
    return voxel_downsample(merged, voxel)
