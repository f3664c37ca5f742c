"""Resolution-aware numeric utilities: normalized rotary coordinates with
cross-resolution analysis, and token-budget-first view sampling with bin
packing.

Normalized patch coordinates map grid index i of an n-patch axis to
(2i + 1)/n - 1, a pixel-center-aligned sampling of (-1, 1) that is shared by
every resolution; changing resolution therefore interpolates rather than
extrapolates the positional phases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleBudgetError, InputError

ROPE_BANDS = 32
ROPE_BASE = 1.0e4


@dataclass
class PatchGrid:
    h_patches: int
    w_patches: int
    patch_size: int = 14

    def __post_init__(self):
        if self.h_patches < 1 or self.w_patches < 1:
            raise InputError("patch counts must be >= 1")
        if self.patch_size < 1:
            raise InputError("patch size must be >= 1")


@dataclass
class TokenBudget:
    t_max: int
    n_cap: int = 48
    n_min: int = 1

    def __post_init__(self):
        if self.t_max < 1:
            raise InputError("t_max must be >= 1")
        if not (1 <= self.n_min <= self.n_cap):
            raise InputError("need 1 <= n_min <= n_cap")


def normalized_axis_coords(n: int) -> np.ndarray:
    """(2i + 1)/n - 1 for i in [0, n); strictly inside (-1, 1)."""
    if n < 1:
        raise InputError("axis needs at least one patch")
    i = np.arange(n, dtype=np.float64)
    return (2.0 * i + 1.0) / n - 1.0


def normalized_coords(grid: PatchGrid) -> np.ndarray:
    """Per-patch (x_hat, y_hat) over the grid, shape (H_p, W_p, 2).

    Height and width are normalized independently; the coordinates depend
    only on patch counts, never on the patch size.
    """
    xs = normalized_axis_coords(grid.h_patches)
    ys = normalized_axis_coords(grid.w_patches)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.stack([gx, gy], axis=-1)


def rope_frequencies(bands: int = ROPE_BANDS, base: float = ROPE_BASE) -> np.ndarray:
    if bands < 1:
        raise InputError("need at least one frequency band")
    return base ** (-np.arange(bands, dtype=np.float64) / bands)


def rope_encoding(coord: float, bands: int = ROPE_BANDS, base: float = ROPE_BASE) -> np.ndarray:
    """Rotation-phase vector [cos(c w_b), sin(c w_b)] over geometric bands."""
    w = rope_frequencies(bands, base)
    phase = coord * w
    out = np.empty(2 * bands)
    out[0::2] = np.cos(phase)
    out[1::2] = np.sin(phase)
    return out


def _center_encoding(grid: PatchGrid, mode: str, bands: int) -> np.ndarray:
    ci = grid.h_patches // 2
    cj = grid.w_patches // 2
    if mode == "normalized":
        x = normalized_axis_coords(grid.h_patches)[ci]
        y = normalized_axis_coords(grid.w_patches)[cj]
    elif mode == "absolute":
        x, y = float(ci), float(cj)
    else:
        raise InputError(f"unknown coordinate mode {mode!r}")
    return np.concatenate([rope_encoding(x, bands), rope_encoding(y, bands)])


def cross_resolution_similarity(
    grid_a: PatchGrid, grid_b: PatchGrid, mode: str, bands: int = ROPE_BANDS
) -> float:
    """Cosine similarity between the center-patch encodings of two grids."""
    ea = _center_encoding(grid_a, mode, bands)
    eb = _center_encoding(grid_b, mode, bands)
    return float(np.dot(ea, eb) / (np.linalg.norm(ea) * np.linalg.norm(eb)))


def similarity_sweep(sizes, mode: str, bands: int = ROPE_BANDS) -> np.ndarray:
    """Pairwise center-encoding similarity matrix over square grid sizes."""
    encs = [_center_encoding(PatchGrid(s, s), mode, bands) for s in sizes]
    encs = np.stack(encs)
    norms = np.linalg.norm(encs, axis=1)
    sim = (encs @ encs.T) / np.outer(norms, norms)
    return sim


def token_budget_views(
    budget: TokenBudget, height: int, width: int, patch: int, seed: int = 0
) -> int:
    """Sample a view count that always respects the per-device token budget.

    t = floor(H/p) * floor(W/p); N_max = min(N_cap, floor(T_max / t));
    N ~ Uniform[N_min, N_max]. Raises when even N_min does not fit.
    """
    if height < patch or width < patch:
        raise InputError("image smaller than one patch")
    t = (height // patch) * (width // patch)
    n_max = min(budget.n_cap, budget.t_max // t)
    if n_max < budget.n_min:
        raise InfeasibleBudgetError(
            f"budget {budget.t_max} fits only {n_max} views of {t} tokens; "
            f"minimum is {budget.n_min}"
        )
    rng = np.random.default_rng(seed)
    return int(rng.integers(budget.n_min, n_max + 1))


def tokens_per_view(height: int, width: int, patch: int) -> int:
    return (height // patch) * (width // patch)


def pack_samples(samples, t_max: int) -> list:
    """First-fit-decreasing packing of per-sample token counts into bins.

    Returns bins as lists of original sample indices; every bin total stays
    within ``t_max``. Oversized samples are rejected.
    """
    samples = [int(s) for s in samples]
    for k, s in enumerate(samples):
        if s > t_max:
            raise InputError(f"sample {k} needs {s} tokens > budget {t_max}")
        if s < 0:
            raise InputError(f"sample {k} has negative token count")
    order = sorted(range(len(samples)), key=lambda k: (-samples[k], k))
    bins = []
    totals = []
    for k in order:
        placed = False
        for b in range(len(bins)):
            if totals[b] + samples[k] <= t_max:
                bins[b].append(k)
                totals[b] += samples[k]
                placed = True
                break
        if not placed:
            bins.append([k])
            totals.append(samples[k])
    return bins


def optimal_bin_count(samples, t_max: int) -> int:
    """Exact minimum bin count by branch and bound (small instances only)."""
    samples = sorted((int(s) for s in samples), reverse=True)
    if not samples:
        return 0
    if any(s > t_max for s in samples):
        raise InputError("sample exceeds the budget")
    best = len(samples)

    def rec(idx, loads):
        nonlocal best
        if len(loads) >= best:
            return
        if idx == len(samples):
            best = min(best, len(loads))
            return
        lower = max(len(loads), math.ceil(sum(samples[idx:]) / t_max))
        if lower >= best:
            return
        s = samples[idx]
        seen = set()
        for b in range(len(loads)):
            if loads[b] + s <= t_max and loads[b] not in seen:
                seen.add(loads[b])
                loads[b] += s
                rec(idx + 1, loads)
                loads[b] -= s
        loads.append(s)
        rec(idx + 1, loads)
        loads.pop()

    rec(0, [])
    return best
