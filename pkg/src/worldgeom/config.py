"""Pipeline configuration: one declarative JSON file, HYG_* env overrides,
and the per-module seed-splitting scheme.

Every parameter has an inline default; a config file only needs the keys it
changes. Environment variables named HYG_<SECTION>_<FIELD> (upper case)
override both defaults and file values, e.g. HYG_PARSE_CELL_SIZE=0.5.

Seeds: every stage derives its generator from the single pipeline seed via
numpy SeedSequence(seed, spawn_key=(module_index, stream)); module indices
are fixed: 0 planner, 1 align, 2 compose, 3 synth, 4 utils. ``stream``
distinguishes per-frame draws inside a module.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .compose.losses import LossWeights
from .depth_align import AlignConfig
from .errors import InputError
from .planner import PlannerConfig

MODULE_SEEDS = {"planner": 0, "align": 1, "compose": 2, "synth": 3, "utils": 4}


def module_rng(seed: int, module: str, stream: int = 0) -> np.random.Generator:
    """Deterministic per-module generator derived from the pipeline seed."""
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(MODULE_SEEDS[module], stream))
    )


def module_seed(seed: int, module: str, stream: int = 0) -> int:
    """Stable 63-bit integer seed for APIs that take a plain seed."""
    ss = np.random.SeedSequence(seed, spawn_key=(MODULE_SEEDS[module], stream))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


@dataclass
class ParseConfig:
    seam_band: int = 16
    mesh_rows: int = 32
    mesh_cols: int = 64
    ratio_threshold: float = 10.0
    floater_rel_jump: float = 0.2
    cell_size: float = 0.25
    agent_height: float = 1.6
    max_slope_deg: float = 45.0
    erosion_radius: float = 0.25
    bridge_gap: float = 0.5

    @property
    def max_slope(self) -> float:
        return math.radians(self.max_slope_deg)


@dataclass
class ComposeConfig:
    tsdf_voxel: float = 0.08
    tsdf_trunc_factor: float = 4.0
    bounds_inflate: float = 0.05
    min_component_faces: int = 10
    simplify_target_faces: int = 0  # 0 = no simplification
    metrics_resolution: int = 32
    expand_voxel: float = 0.05
    guidance_splat_radius: int = 1
    weights: LossWeights = field(default_factory=LossWeights)


@dataclass
class PipelineConfig:
    seed: int = 0
    threads: int = 1
    parse: ParseConfig = field(default_factory=ParseConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    align: AlignConfig = field(default_factory=AlignConfig)
    compose: ComposeConfig = field(default_factory=ComposeConfig)

    def to_dict(self) -> dict:
        def enc(obj):
            if dataclasses.is_dataclass(obj):
                return {
                    f.name: enc(getattr(obj, f.name))
                    for f in dataclasses.fields(obj)
                }
            if isinstance(obj, tuple):
                return list(obj)
            return obj

        return enc(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        cfg = cls()
        _apply_dict(cfg, d)
        return cfg

    @classmethod
    def load(cls, path=None, env=None) -> "PipelineConfig":
        """Defaults, overlaid by an optional JSON file, then HYG_* env vars."""
        cfg = cls()
        if path is not None:
            try:
                data = json.loads(Path(path).read_text())
            except json.JSONDecodeError as e:
                raise InputError(f"{path}: invalid config JSON at offset {e.pos}: {e.msg}")
            _apply_dict(cfg, data)
        _apply_env(cfg, env if env is not None else os.environ)
        return cfg

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _apply_dict(cfg, d: dict) -> None:
    for key, value in d.items():
        if not hasattr(cfg, key):
            raise InputError(f"unknown config key {key!r}")
        current = getattr(cfg, key)
        if dataclasses.is_dataclass(current) and isinstance(value, dict):
            _apply_dict(current, value)
        else:
            setattr(cfg, key, _coerce(current, value, key))


def _coerce(current, value, key):
    if isinstance(current, bool):
        if isinstance(value, bool):
            return value
        raise InputError(f"config key {key!r} expects a boolean")
    if isinstance(current, int) and not isinstance(value, bool):
        return int(value)
    if isinstance(current, float):
        return float(value)
    if isinstance(current, tuple):
        return tuple(value)
    return value


def _apply_env(cfg, env) -> None:
    sections = {
        "": cfg,
        "PARSE": cfg.parse,
        "PLANNER": cfg.planner,
        "ALIGN": cfg.align,
        "COMPOSE": cfg.compose,
        "WEIGHTS": cfg.compose.weights,
    }
    for raw_key, raw_val in env.items():
        if not raw_key.startswith("HYG_"):
            continue
        rest = raw_key[4:]
        target = cfg
        for prefix, obj in sections.items():
            if prefix and rest.startswith(prefix + "_"):
                target = obj
                rest = rest[len(prefix) + 1 :]
                break
        name = rest.lower()
        if not hasattr(target, name):
            raise InputError(f"environment override {raw_key} matches no config field")
        current = getattr(target, name)
        if isinstance(current, bool):
            value = raw_val.strip().lower() in ("1", "true", "yes", "on")
        elif isinstance(current, int):
            value = int(raw_val)
        elif isinstance(current, float):
            value = float(raw_val)
        elif isinstance(current, tuple):
            value = tuple(float(x) for x in raw_val.split(","))
        else:
            value = raw_val
        setattr(target, name, value)
