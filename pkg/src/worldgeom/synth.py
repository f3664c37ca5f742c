"""Analytic scene fixtures: closed-form ERP depth, panoramas, sky masks,
landmarks, and synthetic per-frame alignment inputs.

Every fixture places the panorama center at the world origin with the floor
``cam_height`` meters below it, matching the planner's default eye height.
Depth is the radial ray distance in meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .geometry.camera import Camera, DepthMap
from .geometry.mesh import RaycastScene, render_mesh_depth
from .geometry.panorama import erp_pixel_lonlat, lonlat_to_direction
from .planner import Landmark

SCENE_KINDS = ("box_room", "corridor", "pillar_floor", "step_depth")


@dataclass
class SynthScene:
    kind: str
    depth: DepthMap
    panorama: np.ndarray  # (H, W, 3) in [0, 1]
    sky: np.ndarray  # (H, W) bool
    landmarks: list
    params: dict


def _erp_dirs(height: int):
    lon, lat = erp_pixel_lonlat(2 * height, height)
    return lonlat_to_direction(lon, lat), lon, lat


def _box_exit_distance(dirs: np.ndarray, lo, hi) -> np.ndarray:
    """Distance from the origin (inside the box) to the box walls."""
    t = np.full(dirs.shape[:-1], np.inf)
    for ax in range(3):
        d = dirs[..., ax]
        with np.errstate(divide="ignore"):
            t_pos = np.where(d > 1e-12, hi[ax] / d, np.inf)
            t_neg = np.where(d < -1e-12, lo[ax] / d, np.inf)
        t = np.minimum(t, np.minimum(t_pos, t_neg))
    return t


def _texture(lon, lat, depth, rng):
    """Deterministic colorful shading so photometric metrics see structure."""
    r = 0.5 + 0.35 * np.sin(4.0 * lon) * np.cos(2.0 * lat)
    g = 0.5 + 0.35 * np.cos(3.0 * lat + 0.5 * depth)
    b = 0.5 + 0.35 * np.sin(2.0 * lon + 5.0 * lat)
    img = np.stack([r, g, b], axis=-1)
    img += rng.normal(0.0, 0.01, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def synth_scene(
    kind: str,
    erp_height: int = 128,
    seed: int = 0,
    cam_height: float = 1.4,
    box_size=(6.0, 4.0, 3.0),
    corridor_size=(12.0, 2.5, 2.8),
    floor_radius: float = 8.0,
    pillar_distance: float = 2.5,
    pillar_radius: float = 0.4,
    pillar_height: float = 2.0,
    step_depths=(1.0, 10.0),
) -> SynthScene:
    """Generate one analytic fixture; see SCENE_KINDS for the options."""
    if kind not in SCENE_KINDS:
        raise InputError(f"unknown scene kind {kind!r}; choose from {SCENE_KINDS}")
    rng = np.random.default_rng(seed)
    dirs, lon, lat = _erp_dirs(erp_height)
    h, w = lat.shape
    sky = np.zeros((h, w), dtype=bool)
    landmarks = []
    params: dict = {"kind": kind, "erp_height": erp_height, "cam_height": cam_height}

    if kind == "box_room":
        bw, bd, bh = box_size
        lo = np.array([-bw / 2.0, -bd / 2.0, -cam_height])
        hi = np.array([bw / 2.0, bd / 2.0, bh - cam_height])
        depth_vals = _box_exit_distance(dirs, lo, hi)
        params["box_size"] = list(box_size)
    elif kind == "corridor":
        cl, cw, ch = corridor_size
        lo = np.array([-1.0, -cw / 2.0, -cam_height])
        hi = np.array([cl - 1.0, cw / 2.0, ch - cam_height])
        depth_vals = _box_exit_distance(dirs, lo, hi)
        params["corridor_size"] = list(corridor_size)
    elif kind == "pillar_floor":
        z_floor = -cam_height
        z_top = z_floor + pillar_height
        dz = dirs[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t_floor = np.where(dz < -1e-12, z_floor / dz, np.inf)
        fx = t_floor * dirs[..., 0]
        fy = t_floor * dirs[..., 1]
        hit_floor = np.isfinite(t_floor) & (np.hypot(fx, fy) <= floor_radius)
        t_floor = np.where(hit_floor, t_floor, np.inf)

        # side of a vertical cylinder at (pillar_distance, 0)
        dx, dy = dirs[..., 0], dirs[..., 1]
        a = dx * dx + dy * dy
        b = -2.0 * dx * pillar_distance
        c = pillar_distance**2 - pillar_radius**2
        disc = b * b - 4 * a * c
        t_side = np.full_like(a, np.inf)
        okq = (disc >= 0) & (a > 1e-12)
        sq = np.sqrt(np.where(okq, disc, 0.0))
        t1 = np.where(okq, (-b - sq) / (2 * a), np.inf)
        z1 = t1 * dz
        good = okq & (t1 > 1e-9) & (z1 >= z_floor) & (z1 <= z_top)
        t_side[good] = t1[good]

        # top cap (visible only when the camera is above it)
        t_cap = np.full_like(a, np.inf)
        if z_top < 0:
            with np.errstate(divide="ignore", invalid="ignore"):
                t_pl = np.where(dz < -1e-12, z_top / dz, np.inf)
            px = t_pl * dx - pillar_distance
            py = t_pl * dy
            okc = np.isfinite(t_pl) & (np.hypot(px, py) <= pillar_radius)
            t_cap[okc] = t_pl[okc]

        depth_vals = np.minimum(t_floor, np.minimum(t_side, t_cap))
        sky = ~np.isfinite(depth_vals)
        bound_r = math.hypot(pillar_radius, pillar_height / 2.0)
        landmarks.append(
            Landmark(
                id=0,
                label="pillar",
                centroid=np.array([pillar_distance, 0.0, z_floor + pillar_height / 2.0]),
                radius=bound_r,
            )
        )
        params.update(
            floor_radius=floor_radius,
            pillar_distance=pillar_distance,
            pillar_radius=pillar_radius,
            pillar_height=pillar_height,
        )
    else:  # step_depth
        near, far = step_depths
        depth_vals = np.where(lon < 0.0, near, far)
        params["step_depths"] = list(step_depths)

    valid = np.isfinite(depth_vals) & ~sky
    depth = DepthMap(values=np.where(valid, depth_vals, 1.0), valid=valid)
    pano = _texture(lon, lat, np.where(valid, depth_vals, 0.0), rng)
    return SynthScene(
        kind=kind,
        depth=depth,
        panorama=pano,
        sky=sky,
        landmarks=landmarks,
        params=params,
    )


def landmarks_to_dicts(landmarks) -> list:
    return [
        {
            "id": lm.id,
            "label": lm.label,
            "centroid": [float(x) for x in lm.centroid],
            "radius": float(lm.radius),
        }
        for lm in landmarks
    ]


def landmarks_from_dicts(rows) -> list:
    return [
        Landmark(
            id=int(r["id"]),
            label=str(r.get("label", "")),
            centroid=np.asarray(r["centroid"], dtype=np.float64),
            radius=float(r["radius"]),
        )
        for r in rows
    ]


def write_alignment_inputs(
    mesh,
    trajectories: list,
    out_dir,
    seed: int = 0,
    resolution: int = 48,
    frames_per_seq=6,
    max_seqs: int = 3,
    corrupt_seqs=(),
    gamma_range=(0.7, 1.5),
    beta_range=(-0.05, 0.1),
):
    """Write a frames manifest plus synthetic per-frame depth/camera files.

    Each selected trajectory becomes one video sequence: its frames are
    subsampled to ``frames_per_seq`` cameras (an int, or one count per
    sequence), true mesh depths are rendered and warped by per-frame
    disparity transforms (see synth_frame_inputs), and everything is written
    in the layout the align command consumes. Sequences listed in
    ``corrupt_seqs`` are globally mis-scaled so the outlier stage has
    something to discard; keep them under 10% of the frames or the
    percentile rule cannot flag the whole block. Returns the manifest path.
    """
    import json
    from pathlib import Path

    from .geometry.io import write_camera_json, write_depth

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scene = RaycastScene(mesh)
    rows = []
    fid = 0
    for s, traj in enumerate(trajectories[:max_seqs]):
        frames = traj.frames
        want = frames_per_seq[s] if isinstance(frames_per_seq, (list, tuple)) else frames_per_seq
        if len(frames) > want:
            sel = [frames[int(round(i * (len(frames) - 1) / (want - 1)))] for i in range(want)]
        else:
            sel = list(frames)
        cams = [f.camera for f in sel]
        corrupt = tuple(range(len(cams))) if s in corrupt_seqs else ()
        inputs = synth_frame_inputs(
            scene, cams, seed=seed + 1000 * s, resolution=resolution,
            gamma_range=gamma_range, beta_range=beta_range, corrupt_frames=corrupt,
        )
        for inp in inputs:
            dname = f"frame_{fid:04d}_depth.hwdm"
            cname = f"frame_{fid:04d}_camera.json"
            write_depth(out_dir / dname, inp["depth"])
            write_camera_json(out_dir / cname, inp["camera"])
            rows.append(
                {
                    "id": fid,
                    "sequence": s,
                    "depth": dname,
                    "camera": cname,
                    "confidence": None,
                    "sky": None,
                    "gamma_true": inp["gamma_true"],
                    "beta_true": inp["beta_true"],
                }
            )
            fid += 1
    manifest = out_dir / "frames.json"
    manifest.write_text(json.dumps({"frames": rows}, indent=2, sort_keys=True) + "\n")
    return manifest


def synth_frame_inputs(
    scene: RaycastScene,
    cameras: list,
    seed: int = 0,
    resolution: int = 48,
    gamma_range=(0.7, 1.5),
    beta_range=(-0.05, 0.1),
    corrupt_frames=(),
):
    """Simulated estimated depths for alignment runs.

    Each camera gets the true mesh depth warped by a random per-frame
    disparity transform (1/d_est = (1/d_true - beta)/gamma, the inverse of
    the alignment model, so the fitted coefficients should recover
    (gamma, beta)). Frames listed in ``corrupt_frames`` get an extra 3x
    disparity scale to play the role of broken sequences. Returns a list of
    dicts: {depth, camera, confidence, gamma_true, beta_true}.
    """
    rng = np.random.default_rng(seed)
    out = []
    for k, cam in enumerate(cameras):
        cam_lr = cam
        if cam.width != resolution or cam.height != resolution:
            scale_x = resolution / cam.width
            scale_y = resolution / cam.height
            cam_lr = Camera(
                fx=cam.fx * scale_x,
                fy=cam.fy * scale_y,
                cx=cam.cx * scale_x,
                cy=cam.cy * scale_y,
                width=resolution,
                height=resolution,
                rotation=cam.rotation,
                translation=cam.translation,
            )
        true_depth, _, _ = render_mesh_depth(scene, cam_lr)
        gamma = float(rng.uniform(*gamma_range))
        beta_lo, beta_hi = beta_range
        if np.any(true_depth.valid):
            # keep the shifted disparity positive on every valid pixel
            min_disp = float((1.0 / true_depth.values[true_depth.valid]).min())
            beta_hi = min(beta_hi, 0.9 * min_disp)
        beta_hi = max(beta_hi, beta_lo + 1e-6)
        beta = float(rng.uniform(beta_lo, beta_hi))
        if k in corrupt_frames:
            gamma *= 3.0
        disp_est = np.zeros_like(true_depth.values)
        disp_est[true_depth.valid] = (
            1.0 / true_depth.values[true_depth.valid] - beta
        ) / gamma
        valid = true_depth.valid & (disp_est > 1e-9)
        est = DepthMap(
            values=np.where(valid, 1.0 / np.where(valid, disp_est, 1.0), 1.0),
            valid=valid,
        )
        out.append(
            {
                "depth": est,
                "camera": cam_lr,
                "confidence": np.ones((resolution, resolution)),
                "gamma_true": gamma,
                "beta_true": beta,
            }
        )
    return out
