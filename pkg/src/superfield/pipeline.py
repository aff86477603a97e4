"""End-to-end field construction: reproject, graph, partition, merge, assign.

Stages run sequentially and are timed individually; the whole build is
deterministic for a fixed config and seed.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .hierarchy import SuperpointHierarchy, build_hierarchy
from .labels import GpLabeling, encode_labels, reproject
from .partition import partition_scene
from .render import ProjectedView, RenderConfig
from .scene_io import (
    export_hierarchy,
    list_mask_views,
    load_cameras,
    load_features,
    load_masks,
    load_scene,
)
from .types import Camera, GaussianScene, MaskFeatureMatrix, MaskObservation, ValidationError

HIERARCHY_MODES = ("progressive", "independent", "instance_only")


@dataclass
class PipelineConfig:
    knn_k: int = 10
    channels: Tuple[str, ...] = ("position", "color", "normal")
    channel_scales: Dict[str, float] = field(
        default_factory=lambda: {"position": 1.0, "color": 0.5, "normal": 0.5}
    )
    latent_dim: int = 32
    seed: int = 0
    delta_plus: float = 0.5
    delta_minus: float = 0.5
    clamp: float = 1e-3
    cp_lambda: float = 0.5
    cp_max_iterations: int = 10
    d0_factor: float = 2.0
    visibility_floor: float = 1e-3
    merge_tau: Dict[int, float] = field(default_factory=lambda: {1: 0.9, 2: 0.9, 3: 0.9})
    min_visible_fraction: float = 0.05
    guidance_level: int = 1
    alpha_max: float = 0.99
    alpha_cut: float = 1e-4
    w_min: float = 1e-4
    near_plane: float = 0.01
    cov_floor: float = 0.3
    tile_size: int = 16
    # Ablation switches (mirror the study variants).
    reweight_enabled: bool = True
    depth_decay_enabled: bool = True
    hierarchy_mode: str = "progressive"

    def validate(self) -> None:
        if self.knn_k < 1:
            raise ValidationError("knn_k must be >= 1")
        if not self.channels:
            raise ValidationError("channels must not be empty")
        if self.latent_dim < 2:
            raise ValidationError("latent_dim must be >= 2")
        if self.delta_plus < 0 or self.delta_minus < 0:
            raise ValidationError("delta_plus/delta_minus must be >= 0")
        if self.clamp <= 0:
            raise ValidationError("clamp must be > 0")
        if self.cp_lambda < 0:
            raise ValidationError("cp_lambda must be >= 0")
        if self.cp_max_iterations < 1:
            raise ValidationError("cp_max_iterations must be >= 1")
        if self.guidance_level not in (1, 2, 3):
            raise ValidationError("guidance_level must be 1, 2 or 3")
        for q in (1, 2, 3):
            tau = self.merge_tau.get(q)
            if tau is None or not 0.0 <= tau <= 1.0:
                raise ValidationError(f"merge_tau[{q}] must be in [0, 1]")
        if not 0.0 <= self.min_visible_fraction <= 1.0:
            raise ValidationError("min_visible_fraction must be in [0, 1]")
        if not 0.0 < self.alpha_max <= 1.0:
            raise ValidationError("alpha_max must be in (0, 1]")
        if self.hierarchy_mode not in HIERARCHY_MODES:
            raise ValidationError(f"hierarchy_mode must be one of {HIERARCHY_MODES}")

    def render_config(self) -> RenderConfig:
        return RenderConfig(
            alpha_max=self.alpha_max,
            alpha_cut=self.alpha_cut,
            w_min=self.w_min,
            near_plane=self.near_plane,
            cov_floor=self.cov_floor,
            tile_size=self.tile_size,
        )

    def to_json(self, path: str | Path) -> None:
        payload = asdict(self)
        payload["channels"] = list(self.channels)
        payload["merge_tau"] = {str(k): v for k, v in self.merge_tau.items()}
        Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True))

    @classmethod
    def from_json(cls, path: str | Path) -> "PipelineConfig":
        payload = json.loads(Path(path).read_text())
        payload["channels"] = tuple(payload.get("channels", ("position", "color", "normal")))
        payload["merge_tau"] = {int(k): float(v) for k, v in payload.get("merge_tau", {}).items()}
        config = cls(**payload)
        config.validate()
        return config


@dataclass
class TimingReport:
    stages: Dict[str, float] = field(default_factory=dict)

    @property
    def total(self) -> float:
        return sum(self.stages.values())

    def format(self) -> str:
        lines = [f"  {name:<12s} {secs:8.3f} s" for name, secs in self.stages.items()]
        lines.append(f"  {'total':<12s} {self.total:8.3f} s")
        return "\n".join(lines)


class _StageTimer:
    def __init__(self, report: TimingReport, name: str):
        self.report = report
        self.name = name

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.report.stages[self.name] = time.perf_counter() - self.start
        return False


class StageError(ValidationError):
    """Wraps a failure with the pipeline stage it happened in."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def build_field(
    scene: GaussianScene,
    cameras: Dict[int, Camera],
    observations_by_level: Dict[int, List[MaskObservation]],
    features: MaskFeatureMatrix,
    config: Optional[PipelineConfig] = None,
) -> Tuple[SuperpointHierarchy, TimingReport]:
    """Run the full pipeline in memory; see build_field_from_dir for files."""
    config = config or PipelineConfig()
    config.validate()
    report = TimingReport()
    render_cfg = config.render_config()

    try:
        with _StageTimer(report, "reproject"):
            max_masks = max(
                (int(o.label_map.max(initial=0)) for lvl in observations_by_level.values() for o in lvl),
                default=0,
            )
            codebook = encode_labels(max(max_masks, 1), config.latent_dim, config.seed)
            by_view: Dict[int, Dict[int, MaskObservation]] = {}
            for level, obs_list in observations_by_level.items():
                for obs in obs_list:
                    by_view.setdefault(obs.view_id, {})[level] = obs
            labelings_by_level: Dict[int, List[GpLabeling]] = {1: [], 2: [], 3: []}
            for view_id in sorted(by_view):
                if view_id not in cameras:
                    raise ValidationError(f"mask view {view_id} has no camera")
                view = ProjectedView(scene, cameras[view_id], render_cfg)
                for level in (1, 2, 3):
                    obs = by_view[view_id].get(level)
                    if obs is None:
                        raise ValidationError(f"view {view_id} is missing level-{level} masks")
                    labelings_by_level[level].append(
                        reproject(
                            view, scene, cameras[view_id], obs, codebook,
                            visibility_floor=config.visibility_floor,
                        )
                    )
    except Exception as exc:
        raise StageError("reproject", exc) from exc

    try:
        with _StageTimer(report, "partition"):
            guidance = labelings_by_level[config.guidance_level] if config.reweight_enabled else None
            s0, graph = partition_scene(
                scene,
                labelings=guidance,
                k=config.knn_k,
                channels=config.channels,
                channel_scales=config.channel_scales,
                lam=config.cp_lambda,
                delta_plus=config.delta_plus,
                delta_minus=config.delta_minus,
                clamp=config.clamp,
                use_decay=config.depth_decay_enabled,
                d0_factor=config.d0_factor,
                max_iterations=config.cp_max_iterations,
            )
    except Exception as exc:
        raise StageError("partition", exc) from exc

    try:
        with _StageTimer(report, "merge"):
            graph_edges = graph.edges if graph is not None else np.zeros((0, 2), dtype=np.int32)
            ordered_obs = {
                level: sorted(obs_list, key=lambda o: o.view_id)
                for level, obs_list in observations_by_level.items()
            }
            hierarchy = build_hierarchy(
                s0.assignment,
                graph_edges,
                labelings_by_level,
                ordered_obs,
                features,
                tau=config.merge_tau,
                min_visible_fraction=config.min_visible_fraction,
                mode=config.hierarchy_mode,
            )
    except Exception as exc:
        raise StageError("merge", exc) from exc
    return hierarchy, report


def build_field_from_dir(
    scene_path: str | Path,
    cameras_path: str | Path,
    masks_dir: str | Path,
    features_path: str | Path,
    out_path: Optional[str | Path] = None,
    config: Optional[PipelineConfig] = None,
) -> Tuple[SuperpointHierarchy, TimingReport]:
    """File-based entry point matching the CLI contract."""
    config = config or PipelineConfig()
    report = TimingReport()
    try:
        with _StageTimer(report, "load"):
            scene = load_scene(scene_path)
            cameras = load_cameras(cameras_path)
            features = load_features(features_path)
            observations: Dict[int, List[MaskObservation]] = {1: [], 2: [], 3: []}
            for view_id in list_mask_views(masks_dir):
                cam = cameras.get(view_id)
                shape = (cam.height, cam.width) if cam is not None else None
                for level in (1, 2, 3):
                    observations[level].append(
                        load_masks(masks_dir, view_id, level, expected_shape=shape)
                    )
    except StageError:
        raise
    except Exception as exc:
        raise StageError("load", exc) from exc

    hierarchy, build_report = build_field(scene, cameras, observations, features, config)
    report.stages.update(build_report.stages)
    if out_path is not None:
        try:
            with _StageTimer(report, "export"):
                export_hierarchy(hierarchy, out_path)
        except Exception as exc:
            raise StageError("export", exc) from exc
    return hierarchy, report
