"""Synthetic scenes with exact multi-level masks and one-hot features.

Used by the test suite, the acceptance harness and the benchmarks. Masks
are rendered from ground truth: each pixel takes the entity of its
dominant contributor, so 2D guidance is exactly consistent with the 3D
scene by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .render import ProjectedView, RenderConfig
from .scene_io import save_cameras, save_features, save_scene, write_mask_dir
from .types import Camera, GaussianScene, MaskFeatureMatrix, MaskObservation


def random_unit(rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
    v = rng.standard_normal(shape)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def look_at_camera(
    position: np.ndarray,
    target: np.ndarray,
    width: int = 256,
    height: int = 256,
    focal: float = 240.0,
    up: Tuple[float, float, float] = (0.0, 1.0, 0.0),
) -> Camera:
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rot = np.stack([right, down, forward])  # camera looks along +z
    w2c = np.eye(4)
    w2c[:3, :3] = rot
    w2c[:3, 3] = -rot @ position
    return Camera(
        fx=focal, fy=focal, cx=width / 2.0, cy=height / 2.0,
        width=width, height=height, world_to_camera=w2c,
    )


def ring_cameras(
    n_views: int,
    radius: float,
    target: Sequence[float] = (0.0, 0.0, 0.0),
    height_wobble: float = 1.5,
    width: int = 256,
    height: int = 256,
    focal: float = 240.0,
) -> Dict[int, Camera]:
    cams: Dict[int, Camera] = {}
    target = np.asarray(target, dtype=np.float64)
    for v in range(n_views):
        theta = 2.0 * np.pi * v / n_views
        pos = target + np.array(
            [radius * np.sin(theta), height_wobble * np.cos(2 * theta), radius * np.cos(theta)]
        )
        cams[v] = look_at_camera(pos, target, width=width, height=height, focal=focal)
    return cams


def cluster_scene(
    centers: np.ndarray,
    per_cluster: int,
    spread: float,
    rng: np.random.Generator,
    scale_range: Tuple[float, float] = (0.06, 0.12),
    opacity_range: Tuple[float, float] = (0.85, 0.98),
) -> Tuple[GaussianScene, np.ndarray]:
    """Gaussian blobs around each center; returns (scene, per-gp cluster id)."""
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    k = centers.shape[0]
    n = k * per_cluster
    offsets = rng.uniform(-spread, spread, size=(n, 3))
    cluster = np.repeat(np.arange(k), per_cluster)
    centroid = centers[cluster] + offsets
    rotation = random_unit(rng, (n, 4))
    scale = rng.uniform(*scale_range, size=(n, 3))
    opacity = rng.uniform(*opacity_range, size=n)
    color = rng.uniform(0.0, 1.0, size=(n, 3))
    normal = random_unit(rng, (n, 3))
    scene = GaussianScene(
        centroid.astype(np.float32),
        rotation.astype(np.float32),
        scale.astype(np.float32),
        opacity.astype(np.float32),
        color.astype(np.float32),
        normal.astype(np.float32),
    )
    return scene, cluster


def masks_from_entities(
    scene: GaussianScene,
    cameras: Dict[int, Camera],
    entities_by_level: Dict[int, np.ndarray],
    row_of: Dict[Tuple[int, int], int],
    rule: str = "presence",
    min_weight: float = 0.05,
    render_config: RenderConfig = RenderConfig(),
) -> Dict[int, List[MaskObservation]]:
    """Exact label maps derived from the ground-truth entity memberships.

    rule "presence": a pixel joins an entity's mask iff that entity's
    accumulated compositing weight exceeds 0.5 (matching the presence
    threshold used for rendered query masks; unique since entities are
    disjoint). rule "argmax": the entity of the dominant single
    contributor, when its weight reaches min_weight (cheaper, used for
    large fixtures).

    Entity ids are 0-based per level; pixel label = entity + 1 with the
    manifest row taken from row_of[(level, entity)].
    """
    if rule not in ("presence", "argmax"):
        raise ValueError(f"unknown mask rule {rule!r}")
    observations: Dict[int, List[MaskObservation]] = {lv: [] for lv in entities_by_level}
    finest = min(entities_by_level)
    fine_entities = entities_by_level[finest]
    n_fine = int(fine_entities.max()) + 1
    # Coarser levels must nest over the finest one so presence images sum.
    fine_to_level: Dict[int, np.ndarray] = {}
    for level, entities in entities_by_level.items():
        mapping = np.zeros(n_fine, dtype=np.int64)
        for e in range(n_fine):
            coarse = np.unique(entities[fine_entities == e])
            if coarse.size != 1:
                raise ValueError(f"level {level} does not nest over level {finest}")
            mapping[e] = coarse[0]
        fine_to_level[level] = mapping

    for view_id in sorted(cameras):
        view = ProjectedView(scene, cameras[view_id], render_config)
        if rule == "presence":
            fine_presence = np.zeros((n_fine, cameras[view_id].height, cameras[view_id].width), dtype=np.float64)
            for e in range(n_fine):
                fine_presence[e] = view.presence(np.nonzero(fine_entities == e)[0])
        else:
            best_gp, best_w = view.argmax_weight()
            covered = (best_gp >= 0) & (best_w >= min_weight)
            safe_gp = np.where(covered, best_gp, 0)
        for level, entities in sorted(entities_by_level.items()):
            if rule == "presence":
                n_ent = int(entities.max()) + 1
                presence = np.zeros((n_ent,) + fine_presence.shape[1:], dtype=np.float64)
                for e in range(n_fine):
                    presence[fine_to_level[level][e]] += fine_presence[e]
                winner = np.argmax(presence, axis=0)
                raw = np.where(
                    np.max(presence, axis=0) > 0.5, winner + 1, 0
                ).astype(np.uint32)
            else:
                raw = np.where(covered, entities[safe_gp] + 1, 0).astype(np.uint32)
            present = np.unique(raw)
            present = present[present > 0]
            remapped = np.zeros_like(raw)
            feature_row_of: Dict[int, int] = {}
            for new_id, orig in enumerate(present, start=1):
                remapped[raw == orig] = new_id
                feature_row_of[new_id] = row_of[(level, int(orig) - 1)]
            obs = MaskObservation(
                view_id=view_id, level=level, label_map=remapped, feature_row_of=feature_row_of
            )
            observations[level].append(obs)
    return observations


@dataclass
class SyntheticFixture:
    scene: GaussianScene
    cameras: Dict[int, Camera]
    observations: Dict[int, List[MaskObservation]]
    features: MaskFeatureMatrix
    row_of: Dict[Tuple[int, int], int]
    gt_entities: Dict[int, np.ndarray]       # level -> per-gp 0-based entity id
    entity_counts: Dict[int, int] = field(default_factory=dict)

    def gt_gp_set(self, level: int, entity: int) -> np.ndarray:
        return np.nonzero(self.gt_entities[level] == entity)[0]

    def query_embedding(self, level: int, entity: int) -> np.ndarray:
        return self.features.rows[self.row_of[(level, entity)]].astype(np.float64)

    def write(self, directory: str | Path) -> Dict[str, Path]:
        """Persist scene/cameras/masks/features in the documented layouts."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {
            "scene": directory / "scene.ply",
            "cameras": directory / "cameras.json",
            "masks": directory / "masks",
            "features": directory / "features.bin",
        }
        save_scene(self.scene, paths["scene"])
        save_cameras(self.cameras, paths["cameras"])
        entries = []
        for level in sorted(self.observations):
            for obs in self.observations[level]:
                raw_rows = {int(t): int(r) for t, r in obs.feature_row_of.items()}
                entries.append((obs.view_id, obs.level, obs.label_map, raw_rows))
        write_mask_dir(paths["masks"], entries)
        save_features(self.features, paths["features"])
        return paths


def one_hot_features(n_rows: int, padding: int = 4) -> MaskFeatureMatrix:
    """Orthonormal one-hot rows with spare dimensions for canonical vectors."""
    eye = np.eye(n_rows, n_rows + padding, dtype=np.float32)
    return MaskFeatureMatrix(eye)


def canonical_embeddings(features: MaskFeatureMatrix, count: int = 4) -> np.ndarray:
    """Unit vectors in the padding dimensions, orthogonal to every feature row."""
    d = features.d_sem
    out = np.zeros((count, d))
    for i in range(count):
        out[i, d - count + i] = 1.0
    return out


def three_objects_fixture(
    per_subpart: int = 75,
    n_views: int = 12,
    seed: int = 7,
    image_size: int = 256,
) -> SyntheticFixture:
    """3 objects x 2 parts x 2 sub-parts, exact 3-level masks, one-hot features.

    Level-3 entities are objects (3), level-2 parts (6), level-1 sub-parts
    (12). The layout is a coplanar billboard viewed frontally from a
    narrow camera arc: entities are separated by small in-plane gaps and
    never occlude each other, so every primitive's dominant mask label is
    its own entity in every view.
    """
    rng = np.random.default_rng(seed)
    object_x = (-4.0, 0.0, 4.0)
    part_y = (-0.5, 0.5)
    sub_x = (-0.45, 0.45)
    n = 3 * 2 * 2 * per_subpart
    sub_id = np.repeat(np.arange(12), per_subpart)
    part_id = sub_id // 2
    object_id = part_id // 2
    centroid = np.empty((n, 3))
    centroid[:, 0] = (
        np.array(object_x)[object_id]
        + np.array(sub_x)[sub_id % 2]
        + rng.uniform(-0.4, 0.4, n)
    )
    centroid[:, 1] = np.array(part_y)[part_id % 2] + rng.uniform(-0.4, 0.4, n)
    centroid[:, 2] = rng.uniform(-0.1, 0.1, n)
    scene = GaussianScene(
        centroid.astype(np.float32),
        random_unit(rng, (n, 4)).astype(np.float32),
        rng.uniform(0.05, 0.1, (n, 3)).astype(np.float32),
        rng.uniform(0.9, 0.98, n).astype(np.float32),
        rng.uniform(0.0, 1.0, (n, 3)).astype(np.float32),
        random_unit(rng, (n, 3)).astype(np.float32),
    )

    n_sub, n_part, n_obj = 12, 6, 3
    row_of: Dict[Tuple[int, int], int] = {}
    for e in range(n_sub):
        row_of[(1, e)] = e
    for e in range(n_part):
        row_of[(2, e)] = n_sub + e
    for e in range(n_obj):
        row_of[(3, e)] = n_sub + n_part + e
    features = one_hot_features(n_sub + n_part + n_obj)

    cameras: Dict[int, Camera] = {}
    azimuths = np.linspace(-14.0, 14.0, n_views)
    elevations = [-10.0, -4.0, 4.0, 10.0]
    for v in range(n_views):
        az = np.deg2rad(azimuths[v])
        el = np.deg2rad(elevations[v % len(elevations)])
        radius = 11.5
        pos = radius * np.array([np.sin(az) * np.cos(el), np.sin(el), np.cos(az) * np.cos(el)])
        cameras[v] = look_at_camera(
            pos, (0.0, 0.0, 0.0), width=image_size, height=image_size, focal=220.0
        )
    entities = {1: sub_id, 2: part_id, 3: object_id}
    observations = masks_from_entities(scene, cameras, entities, row_of)
    return SyntheticFixture(
        scene=scene,
        cameras=cameras,
        observations=observations,
        features=features,
        row_of=row_of,
        gt_entities=entities,
        entity_counts={1: n_sub, 2: n_part, 3: n_obj},
    )


def touching_clusters_fixture(
    per_cluster: int = 220,
    n_views: int = 6,
    seed: int = 11,
) -> SyntheticFixture:
    """Two abutting uniform boxes with a mask boundary between them.

    Geometry alone cannot resolve the boundary (uniform density across
    it), so mask-guided reweighting is what recovers the split.
    """
    rng = np.random.default_rng(seed)
    n = 2 * per_cluster
    pts = np.empty((n, 3))
    pts[:per_cluster, 0] = rng.uniform(-1.6, 0.0, per_cluster)
    pts[per_cluster:, 0] = rng.uniform(0.0, 1.6, per_cluster)
    pts[:, 1] = rng.uniform(-0.8, 0.8, n)
    pts[:, 2] = rng.uniform(-0.8, 0.8, n)
    cluster = np.repeat(np.arange(2), per_cluster)
    scene = GaussianScene(
        pts.astype(np.float32),
        random_unit(rng, (n, 4)).astype(np.float32),
        rng.uniform(0.05, 0.1, (n, 3)).astype(np.float32),
        rng.uniform(0.85, 0.98, n).astype(np.float32),
        rng.uniform(0, 1, (n, 3)).astype(np.float32),
        random_unit(rng, (n, 3)).astype(np.float32),
    )
    row_of = {(lv, e): (lv - 1) * 2 + e for lv in (1, 2, 3) for e in range(2)}
    features = one_hot_features(6)
    cameras = ring_cameras(n_views, radius=7.0)
    entities = {1: cluster, 2: cluster, 3: cluster}
    observations = masks_from_entities(scene, cameras, entities, row_of)
    return SyntheticFixture(
        scene=scene,
        cameras=cameras,
        observations=observations,
        features=features,
        row_of=row_of,
        gt_entities=entities,
        entity_counts={1: 2, 2: 2, 3: 2},
    )


def large_fixture(
    n_gp: int = 100_000,
    n_views: int = 20,
    n_clusters: int = 24,
    seed: int = 3,
    image_size: int = 256,
) -> SyntheticFixture:
    """Scale fixture: blob clusters, cluster-level masks replicated per level."""
    rng = np.random.default_rng(seed)
    grid = int(np.ceil(np.sqrt(n_clusters)))
    centers = []
    for i in range(n_clusters):
        gx, gz = divmod(i, grid)
        centers.append((2.6 * (gx - (grid - 1) / 2), 0.0, 2.6 * (gz - (grid - 1) / 2)))
    per = n_gp // n_clusters
    scene, cluster = cluster_scene(
        np.array(centers), per, spread=0.85, rng=rng, scale_range=(0.05, 0.1)
    )
    row_of = {(lv, e): (lv - 1) * n_clusters + e for lv in (1, 2, 3) for e in range(n_clusters)}
    rows = random_unit(rng, (3 * n_clusters, 16)).astype(np.float32)
    features = MaskFeatureMatrix(rows)
    cameras = ring_cameras(
        n_views, radius=4.0 * grid, width=image_size, height=image_size, focal=200.0
    )
    entities = {1: cluster, 2: cluster, 3: cluster}
    observations = masks_from_entities(scene, cameras, entities, row_of, rule="argmax")
    return SyntheticFixture(
        scene=scene,
        cameras=cameras,
        observations=observations,
        features=features,
        row_of=row_of,
        gt_entities=entities,
        entity_counts={1: n_clusters, 2: n_clusters, 3: n_clusters},
    )
