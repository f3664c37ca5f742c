"""Command-line pipeline: synth-scene, parse-scene, plan, align, compose,
and the numeric utilities.

Every command is deterministic given (inputs, config, seed) and writes a
manifest of sha256 content hashes next to its outputs, enabling byte-level
regression checks. Output files are written atomically (temp + rename).

Exit codes: 0 success, 2 input error, 3 degenerate result, 4 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from . import synth
from .compose import TSDFVolume, extract_mesh, geometric_loss, photometric_loss, tsdf_integrate
from .config import PipelineConfig, module_seed
from .depth_align import (
    AlignCoeff,
    apply_alignment,
    build_reliability_mask,
    detect_and_revise_outliers,
    expand_pointcloud,
    fit_scale_shift,
    guidance_depth_range,
)
from .errors import DegenerateResultError, InputError, InsufficientSupportError, WorldGeomError
from .geometry.camera import DepthMap, edge_floater_mask, render_depth
from .geometry.io import (
    read_camera_json,
    read_depth,
    read_ply,
    write_camera_json,
    write_depth,
    write_ply_mesh,
    write_ply_pointcloud,
)
from .geometry.mesh import (
    RaycastScene,
    TriangleMesh,
    build_panoramic_mesh,
    interpolate_vertex_colors,
    render_mesh_depth,
)
from .geometry.panorama import PanoramaImage, erp_backproject, sample_erp
from .navmesh import NavMesh, build_navmesh, refine_navmesh
from .planner import TrajectorySet, plan_all
from .resolution import PatchGrid, cross_resolution_similarity, pack_samples


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out_dir, command: str, seed: int, outputs) -> Path:
    manifest = {
        "command": command,
        "seed": int(seed),
        "outputs": {Path(p).name: _sha256(p) for p in sorted(map(str, outputs))},
    }
    path = Path(out_dir) / "manifest.json"
    atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _save_png(path, array: np.ndarray) -> None:
    arr = np.asarray(array)
    if arr.dtype != np.uint8:
        arr = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    img = Image.fromarray(arr)
    buf = tempfile.NamedTemporaryFile(
        dir=Path(path).parent, suffix=".png", delete=False
    )
    try:
        img.save(buf.name, format="PNG")
        buf.close()
        os.replace(buf.name, path)
    except BaseException:
        buf.close()
        if os.path.exists(buf.name):
            os.unlink(buf.name)
        raise


def _load_png(path, gray: bool = False) -> np.ndarray:
    img = Image.open(path)
    img = img.convert("L" if gray else "RGB")
    arr = np.asarray(img, dtype=np.float64) / 255.0
    return arr


# ---------------------------------------------------------------------------
# synth-scene
# ---------------------------------------------------------------------------


def cmd_synth_scene(args, cfg: PipelineConfig) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scene = synth.synth_scene(
        args.kind,
        erp_height=args.erp_height,
        seed=module_seed(cfg.seed, "synth"),
        cam_height=cfg.planner.camera_height,
    )
    _save_png(out / "pano.png", scene.panorama)
    write_depth(out / "depth.hwdm", scene.depth)
    _save_png(out / "sky.png", scene.sky.astype(np.uint8) * 255)
    atomic_write_text(
        out / "landmarks.json",
        json.dumps(synth.landmarks_to_dicts(scene.landmarks), indent=2, sort_keys=True)
        + "\n",
    )
    atomic_write_text(
        out / "scene_gt.json", json.dumps(scene.params, indent=2, sort_keys=True) + "\n"
    )
    files = ["pano.png", "depth.hwdm", "sky.png", "landmarks.json", "scene_gt.json"]
    write_manifest(out, "synth-scene", cfg.seed, [out / f for f in files])
    print(f"synth-scene[{args.kind}] -> {out} ({len(scene.landmarks)} landmarks)")
    return 0


# ---------------------------------------------------------------------------
# parse-scene
# ---------------------------------------------------------------------------


def load_bundle(bundle_dir):
    bundle = Path(bundle_dir)
    depth_path = bundle / "depth.hwdm"
    pano_path = bundle / "pano.png"
    for p in (depth_path, pano_path):
        if not p.exists():
            raise InputError(f"scene bundle is missing {p}")
    depth = read_depth(depth_path)
    if depth.width != 2 * depth.height:
        raise InputError(
            f"{depth_path}: ERP depth must have width = 2*height, "
            f"got {depth.width}x{depth.height}"
        )
    pano = _load_png(pano_path)
    if pano.shape[:2] != (depth.height, depth.width):
        raise InputError("panorama and ERP depth dimensions differ")
    sky = None
    if (bundle / "sky.png").exists():
        sky = _load_png(bundle / "sky.png", gray=True) > 0.5
    landmarks = []
    lm_path = bundle / "landmarks.json"
    if lm_path.exists():
        try:
            landmarks = synth.landmarks_from_dicts(json.loads(lm_path.read_text()))
        except json.JSONDecodeError as e:
            raise InputError(f"{lm_path}: invalid JSON at offset {e.pos}: {e.msg}")
    return depth, pano, sky, landmarks


def cmd_parse_scene(args, cfg: PipelineConfig) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    depth, pano, sky, landmarks = load_bundle(args.bundle)
    pc = cfg.parse

    valid = depth.valid if sky is None else depth.valid & ~sky
    scene_depth = DepthMap(values=depth.values, valid=valid)
    floaters = edge_floater_mask(scene_depth, pc.floater_rel_jump)
    cloud = erp_backproject(scene_depth, colors=pano, skip=floaters)
    mesh = build_panoramic_mesh(
        scene_depth, rows=pc.mesh_rows, cols=pc.mesh_cols, ratio_threshold=pc.ratio_threshold
    )
    nav = build_navmesh(
        mesh, pc.cell_size, agent_height=pc.agent_height, max_slope=pc.max_slope
    )
    nav = refine_navmesh(nav, mesh, pc.erosion_radius, pc.bridge_gap)

    write_ply_pointcloud(out / "pointcloud.ply", cloud)
    write_ply_mesh(out / "mesh.ply", mesh)
    atomic_write_text(
        out / "navmesh.json", json.dumps(nav.to_dict(), indent=2, sort_keys=True) + "\n"
    )
    write_depth(out / "scene_depth.hwdm", scene_depth)
    atomic_write_text(
        out / "landmarks.json",
        json.dumps(synth.landmarks_to_dicts(landmarks), indent=2, sort_keys=True) + "\n",
    )
    _save_png(out / "pano.png", pano)
    files = [
        "pointcloud.ply",
        "mesh.ply",
        "navmesh.json",
        "scene_depth.hwdm",
        "landmarks.json",
        "pano.png",
    ]
    write_manifest(out, "parse-scene", cfg.seed, [out / f for f in files])
    print(
        f"parse-scene -> {out}: {len(cloud)} points, {mesh.n_faces} faces, "
        f"{nav.n_cells} navmesh cells"
    )
    return 0


def _require(path, hint: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise InputError(f"missing {path}; run `worldgeom {hint}` first")
    return path


def load_scene_artifacts(scene_dir):
    scene_dir = Path(scene_dir)
    mesh = read_ply(_require(scene_dir / "mesh.ply", "parse-scene"))
    if not isinstance(mesh, TriangleMesh):
        raise InputError(f"{scene_dir}/mesh.ply does not hold a mesh")
    nav = NavMesh.from_dict(
        json.loads(_require(scene_dir / "navmesh.json", "parse-scene").read_text())
    )
    cloud = read_ply(_require(scene_dir / "pointcloud.ply", "parse-scene"))
    depth = read_depth(_require(scene_dir / "scene_depth.hwdm", "parse-scene"))
    landmarks = synth.landmarks_from_dicts(
        json.loads(_require(scene_dir / "landmarks.json", "parse-scene").read_text())
    )
    return mesh, nav, cloud, depth, landmarks


# ---------------------------------------------------------------------------
# plan
# ---------------------------------------------------------------------------


def cmd_plan(args, cfg: PipelineConfig) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mesh, nav, _, depth, landmarks = load_scene_artifacts(args.scene)
    ts = plan_all(mesh, nav, landmarks, depth, cfg.planner, seed=cfg.seed)
    atomic_write_text(
        out / "trajectories.json",
        json.dumps(ts.to_dict(), indent=2, sort_keys=True) + "\n",
    )
    atomic_write_text(out / "cameras.txt", ts.to_camera_list())
    write_manifest(
        out, "plan", cfg.seed, [out / "trajectories.json", out / "cameras.txt"]
    )
    print("mode         count  cap")
    from .planner import MODE_CAPS

    for mode, cap in MODE_CAPS.items():
        print(f"{mode:<12} {ts.counts[mode]:>5} {cap:>4}")
    print(f"{'total':<12} {ts.total:>5} {35:>4}")
    return 0


# ---------------------------------------------------------------------------
# align
# ---------------------------------------------------------------------------


def _load_frames_manifest(path):
    path = _require(path, "align (frames manifest)")
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: invalid JSON at offset {e.pos}: {e.msg}")
    frames = data.get("frames")
    if not frames:
        raise InputError(f"{path}: no frames listed")
    base = Path(path).parent
    rows = []
    for k, row in enumerate(frames):
        for key in ("depth", "camera"):
            if key not in row:
                raise InputError(f"{path}: frame {k} is missing the {key!r} field")
        rows.append(
            {
                "id": int(row.get("id", k)),
                "sequence": int(row.get("sequence", 0)),
                "depth": base / row["depth"],
                "camera": base / row["camera"],
                "confidence": base / row["confidence"] if row.get("confidence") else None,
                "sky": base / row["sky"] if row.get("sky") else None,
            }
        )
    return rows


def cmd_align(args, cfg: PipelineConfig) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _, _, cloud, _, _ = load_scene_artifacts(args.scene)
    rows = _load_frames_manifest(args.frames)
    ac = cfg.align

    from concurrent.futures import ThreadPoolExecutor

    def fit_one(k):
        row = rows[k]
        d_m = read_depth(row["depth"])
        cam = read_camera_json(row["camera"])
        if d_m.width != cam.width or d_m.height != cam.height:
            raise InputError(f"frame {row['id']}: depth and camera dimensions differ")
        conf = None
        if row["confidence"] is not None:
            from .geometry.io import read_raw_map

            conf = read_raw_map(row["confidence"])
        sky = _load_png(row["sky"], gray=True) > 0.5 if row["sky"] else None
        d_g = render_depth(cloud, cam, splat_radius=cfg.compose.guidance_splat_radius)
        mask = build_reliability_mask(d_m, d_g, None, None, conf, sky, ac)
        try:
            coeff = fit_scale_shift(
                d_m,
                d_g,
                mask,
                ac,
                seed=module_seed(cfg.seed, "align", stream=row["id"]),
                frame_id=row["id"],
            )
            failed = False
        except InsufficientSupportError:
            coeff = AlignCoeff(
                frame_id=row["id"], gamma=1.0, beta=0.0, inlier_ratio=0.0
            )
            failed = True
        return d_m, cam, mask, d_g, coeff, failed

    with ThreadPoolExecutor(max_workers=max(1, cfg.threads)) as pool:
        results = list(pool.map(fit_one, range(len(rows))))

    seq_ids = [row["sequence"] for row in rows]
    coeffs = [r[4] for r in results]
    failed = [r[5] for r in results]

    # frames whose fit failed borrow the nearest fitted frame in-sequence
    for i, bad in enumerate(failed):
        if not bad:
            continue
        donors = [
            j
            for j in range(len(rows))
            if seq_ids[j] == seq_ids[i] and not failed[j]
        ]
        if donors:
            j = min(donors, key=lambda j: (abs(j - i), j))
            coeffs[i] = AlignCoeff(
                frame_id=coeffs[i].frame_id,
                gamma=coeffs[j].gamma,
                beta=coeffs[j].beta,
                inlier_ratio=0.0,
                outlier=True,
                revised_from=coeffs[j].frame_id,
            )
        else:
            coeffs[i] = AlignCoeff(
                frame_id=coeffs[i].frame_id,
                gamma=coeffs[i].gamma,
                beta=coeffs[i].beta,
                inlier_ratio=0.0,
                outlier=True,
                discarded_sequence=True,
            )

    guidance = [r[3] for r in results]
    depth_range = guidance_depth_range(guidance, ac)
    fitted_idx = [i for i in range(len(rows)) if not failed[i]]
    if len(fitted_idx) >= 2:
        revised = detect_and_revise_outliers(
            [coeffs[i] for i in fitted_idx],
            depth_range,
            [seq_ids[i] for i in fitted_idx],
            ac,
        )
        for i, c in zip(fitted_idx, revised):
            coeffs[i] = c

    # sequences where every frame ended discarded are dropped wholesale
    discarded_seqs = set()
    for s in sorted(set(seq_ids)):
        members = [i for i in range(len(rows)) if seq_ids[i] == s]
        if all(coeffs[i].discarded_sequence for i in members):
            discarded_seqs.add(s)
            for i in members:
                coeffs[i].discarded_sequence = True

    report = []
    outputs = []
    aligned_for_expand = []
    for i, row in enumerate(rows):
        c = coeffs[i]
        report.append(
            {
                "frame": c.frame_id,
                "sequence": seq_ids[i],
                "gamma": c.gamma,
                "beta": c.beta,
                "inlier_ratio": c.inlier_ratio,
                "flagged": bool(c.outlier),
                "revised_from": c.revised_from,
                "discarded_sequence": bool(c.discarded_sequence),
            }
        )
        if c.discarded_sequence:
            continue
        d_m, cam, mask, _, _, _ = results[i]
        d_a = apply_alignment(d_m, c)
        name = f"aligned_{c.frame_id:04d}.hwdm"
        write_depth(out / name, d_a)
        write_camera_json(out / f"camera_{c.frame_id:04d}.json", cam)
        outputs.append(out / name)
        outputs.append(out / f"camera_{c.frame_id:04d}.json")
        aligned_for_expand.append((d_a, cam, mask.combined))
        report[-1]["aligned"] = name
        report[-1]["camera"] = f"camera_{c.frame_id:04d}.json"

    atomic_write_text(
        out / "report.json", json.dumps(report, indent=2, sort_keys=True) + "\n"
    )
    outputs.append(out / "report.json")
    if not aligned_for_expand:
        write_manifest(out, "align", cfg.seed, outputs)
        raise DegenerateResultError("every sequence was discarded; see report.json")
    expanded = expand_pointcloud(
        _positions_only(cloud), aligned_for_expand, cfg.compose.expand_voxel
    )
    write_ply_pointcloud(out / "expanded.ply", expanded)
    outputs.append(out / "expanded.ply")
    write_manifest(out, "align", cfg.seed, outputs)
    kept = len(aligned_for_expand)
    print(
        f"align -> {out}: {kept}/{len(rows)} frames aligned, "
        f"{len(discarded_seqs)} sequences discarded, {len(expanded)} expanded points"
    )
    return 0


def _positions_only(pc):
    from .geometry.pointcloud import PointCloud

    return PointCloud(positions=pc.positions)


# ---------------------------------------------------------------------------
# compose
# ---------------------------------------------------------------------------


def cmd_compose(args, cfg: PipelineConfig) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scene_dir = Path(args.scene)
    align_dir = Path(args.aligned)
    pano = PanoramaImage(values=_load_png(_require(scene_dir / "pano.png", "parse-scene")))
    report_path = _require(align_dir / "report.json", "align")
    report = json.loads(report_path.read_text())
    frames = []
    for row in report:
        if row.get("discarded_sequence") or "aligned" not in row:
            continue
        d = read_depth(align_dir / row["aligned"])
        cam = read_camera_json(align_dir / row["camera"])
        frames.append((row["frame"], d, cam))
    if not frames:
        raise DegenerateResultError("no aligned frames available for fusion")

    cc = cfg.compose
    expanded = read_ply(_require(align_dir / "expanded.ply", "align"))
    lo, hi = expanded.bounds()
    vol = TSDFVolume.from_bounds(
        lo,
        hi,
        cc.tsdf_voxel,
        truncation=cc.tsdf_trunc_factor * cc.tsdf_voxel,
        inflate=cc.bounds_inflate,
    )
    for _, d, cam in frames:
        rays = cam.pixel_rays()
        dirs_world = (rays / np.linalg.norm(rays, axis=-1, keepdims=True)) @ cam.rotation.T
        color = sample_erp(pano.values, dirs_world)
        tsdf_integrate(vol, d, color, cam)
    if not np.any(vol.weight > 0):
        raise DegenerateResultError("TSDF fusion saw no valid observations")
    mesh = extract_mesh(
        vol,
        min_component_faces=cc.min_component_faces,
        simplify_target_faces=cc.simplify_target_faces or None,
    )
    if mesh.n_faces == 0:
        raise DegenerateResultError("fused volume produced an empty mesh")
    write_ply_mesh(out / "fused_mesh.ply", mesh)

    # per-frame losses of mesh re-renderings against the inputs
    scene = RaycastScene(mesh)
    metrics = []
    for fid, d, cam in frames:
        mcam = _metrics_camera(cam, cc.metrics_resolution)
        md, mf, mb = render_mesh_depth(scene, mcam)
        rays = mcam.pixel_rays()
        dirs_world = (rays / np.linalg.norm(rays, axis=-1, keepdims=True)) @ mcam.rotation.T
        target_rgb = sample_erp(pano.values, dirs_world)
        rendered_rgb = (
            interpolate_vertex_colors(mesh, mf, mb)
            if mesh.vertex_colors is not None
            else np.zeros_like(target_rgb)
        )
        rendered_rgb = np.where(md.valid[..., None], rendered_rgb, target_rgb)
        photo = photometric_loss(rendered_rgb, target_rgb, cc.weights.lambda_c1)
        ref = _resample_depth(d, cc.metrics_resolution)
        try:
            geo = geometric_loss(md, ref, None, None, cc.weights.lambda_d, 0.0)
        except WorldGeomError:
            geo = None
        metrics.append({"frame": fid, "photometric": photo, "geometric": geo})
    atomic_write_text(
        out / "metrics.json", json.dumps(metrics, indent=2, sort_keys=True) + "\n"
    )
    write_manifest(out, "compose", cfg.seed, [out / "fused_mesh.ply", out / "metrics.json"])
    print(f"compose -> {out}: {mesh.n_faces} faces, {len(metrics)} frame metrics")
    return 0


def _metrics_camera(cam, resolution: int):
    from .geometry.camera import Camera

    sx = resolution / cam.width
    sy = resolution / cam.height
    return Camera(
        fx=cam.fx * sx,
        fy=cam.fy * sy,
        cx=cam.cx * sx,
        cy=cam.cy * sy,
        width=resolution,
        height=resolution,
        rotation=cam.rotation,
        translation=cam.translation,
    )


def _resample_depth(depth: DepthMap, resolution: int) -> DepthMap:
    ys = (np.arange(resolution) + 0.5) * depth.height / resolution - 0.5
    xs = (np.arange(resolution) + 0.5) * depth.width / resolution - 0.5
    iy = np.clip(np.round(ys).astype(int), 0, depth.height - 1)
    ix = np.clip(np.round(xs).astype(int), 0, depth.width - 1)
    vals = depth.values[np.ix_(iy, ix)]
    valid = depth.valid[np.ix_(iy, ix)]
    return DepthMap(values=vals, valid=valid)


# ---------------------------------------------------------------------------
# utils
# ---------------------------------------------------------------------------


def cmd_rope_analysis(args, cfg: PipelineConfig) -> int:
    sizes = list(range(args.min_size, args.max_size + 1, args.step))
    lines = ["size_a,size_b,normalized,absolute"]
    for a in sizes:
        for b in sizes:
            sn = cross_resolution_similarity(PatchGrid(a, a), PatchGrid(b, b), "normalized")
            sa = cross_resolution_similarity(PatchGrid(a, a), PatchGrid(b, b), "absolute")
            lines.append(f"{a},{b},{sn:.6f},{sa:.6f}")
    text = "\n".join(lines) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
        print(f"rope-analysis -> {args.out} ({len(sizes)}x{len(sizes)} pairs)")
    else:
        print(text, end="")
    return 0


def cmd_pack(args, cfg: PipelineConfig) -> int:
    try:
        data = json.loads(Path(args.manifest).read_text())
    except FileNotFoundError:
        raise InputError(f"missing pack manifest {args.manifest}")
    except json.JSONDecodeError as e:
        raise InputError(f"{args.manifest}: invalid JSON at offset {e.pos}: {e.msg}")
    t_max = int(data["t_max"])
    samples = data["samples"]
    tokens = [int(s["tokens"]) for s in samples]
    bins = pack_samples(tokens, t_max)
    out_rows = [
        {
            "bin": b,
            "samples": [samples[k].get("id", k) for k in members],
            "total": sum(tokens[k] for k in members),
        }
        for b, members in enumerate(bins)
    ]
    text = json.dumps(out_rows, indent=2, sort_keys=True) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
        print(f"pack -> {args.out}: {len(bins)} bins for {len(samples)} samples")
    else:
        print(text, end="")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="worldgeom",
        description="Deterministic geometry pipeline for panoramic world composition",
    )
    p.add_argument("--config", help="JSON config file", default=None)
    p.add_argument("--seed", type=int, default=None, help="pipeline seed (overrides config)")
    p.add_argument("--threads", type=int, default=None, help="worker thread bound")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-scene", help="generate an analytic scene fixture")
    s.add_argument("kind", choices=synth.SCENE_KINDS)
    s.add_argument("--erp-height", type=int, default=128)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth_scene)

    s = sub.add_parser("parse-scene", help="panoramic cloud, mesh, and NavMesh")
    s.add_argument("bundle", help="scene bundle directory (pano, depth, sky, landmarks)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_parse_scene)

    s = sub.add_parser("plan", help="generate the trajectory set")
    s.add_argument("scene", help="parse-scene output directory")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("align", help="align frame depths to the panoramic cloud")
    s.add_argument("scene", help="parse-scene output directory")
    s.add_argument("frames", help="frames manifest JSON")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_align)

    s = sub.add_parser("compose", help="fuse aligned depths into a mesh")
    s.add_argument("scene", help="parse-scene output directory")
    s.add_argument("aligned", help="align output directory")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_compose)

    u = sub.add_parser("utils", help="numeric utilities")
    usub = u.add_subparsers(dest="util", required=True)
    s = usub.add_parser("rope-analysis", help="cross-resolution similarity CSV")
    s.add_argument("--min-size", type=int, default=8)
    s.add_argument("--max-size", type=int, default=64)
    s.add_argument("--step", type=int, default=4)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_rope_analysis)
    s = usub.add_parser("pack", help="first-fit-decreasing sample packing")
    s.add_argument("manifest", help="JSON {t_max, samples:[{id, tokens}]}")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_pack)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = PipelineConfig.load(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.threads is not None:
            cfg.threads = max(1, args.threads)
        return args.func(args, cfg)
    except InputError as e:
        print(f"input error: {e}", file=sys.stderr)
        return 2
    except DegenerateResultError as e:
        print(f"degenerate result: {e}", file=sys.stderr)
        return 3
    except WorldGeomError as e:
        print(f"internal error: {e}", file=sys.stderr)
        return 4
    except Exception as e:  # pragma: no cover - safety net
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
