"""Latent label encoding and 2D-to-3D mask reprojection.

Mask ids become random unit vectors; rendering weights pull those vectors
back onto primitives, and a cosine argmax recovers one discrete label per
primitive per view.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .render import ProjectedView
from .types import Camera, FormatError, GaussianScene, MaskObservation, ValidationError

LABELS_MAGIC = b"SLBL"
DEFAULT_LATENT_DIM = 32
DEFAULT_VISIBILITY_FLOOR = 1e-3


@dataclass(frozen=True)
class LatentCodebook:
    """M unit vectors on the D-sphere, bit-reproducible from (M, D, seed)."""

    rows: np.ndarray
    seed: int

    @property
    def m(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]

    def with_zero_row(self) -> np.ndarray:
        """Codebook prefixed with a zero row so label 0 contributes nothing."""
        out = np.zeros((self.m + 1, self.d), dtype=np.float64)
        out[1:] = self.rows
        return out


_PAIR_COS_TARGET = 0.55
_REPULSION_STEPS = 50


def encode_labels(m: int, d: int, seed: int) -> LatentCodebook:
    """Random unit codebook with a worst-pair separation guarantee.

    Rows start as normalized standard-normal samples; the occasional
    too-close pair (iid sampling leaves a small tail above |cos| ~ 0.55
    at realistic sizes) is then pushed apart by a deterministic repulsion
    sweep, which keeps the codebook reproducible from (m, d, seed) while
    capping the worst-case pairwise |cos|. High mask counts in low
    dimensions can exhaust the sphere packing; the sweep then stops at the
    iteration cap with a best-effort spread.
    """
    if m < 1:
        raise ValidationError(f"mask count must be >= 1, got {m}")
    if d < 2:
        raise ValidationError(f"latent dimension must be >= 2, got {d}")
    rng = np.random.default_rng(seed)
    rows = rng.standard_normal((m, d))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    for _ in range(_REPULSION_STEPS):
        gram = rows @ rows.T
        np.fill_diagonal(gram, 0.0)
        worst = np.abs(gram).max()
        if worst <= _PAIR_COS_TARGET:
            break
        ii, jj = np.nonzero(np.abs(gram) > _PAIR_COS_TARGET)
        mask = ii < jj
        for i, j in zip(ii[mask], jj[mask]):
            dot = float(np.dot(rows[i], rows[j]))
            step = 0.5 * np.sign(dot)
            u = rows[i] - step * rows[j]
            v = rows[j] - step * rows[i]
            rows[i] = u / np.linalg.norm(u)
            rows[j] = v / np.linalg.norm(v)
    return LatentCodebook(rows=rows, seed=seed)


@dataclass
class GpLabeling:
    """Per-view discrete labels recovered from reprojected latents.

    label 0 marks primitives whose total compositing weight in the view
    stayed below the visibility floor.
    """

    view_id: int
    level: int
    latent: np.ndarray       # (n, D) float64, zero rows for unseen
    label: np.ndarray        # (n,) uint32, 0 = unseen
    confidence: np.ndarray   # (n,) float64, cos(latent, codebook[label])
    depth: np.ndarray        # (n,) float64, NaN when behind the camera
    total_weight: np.ndarray # (n,) float64

    @property
    def seen(self) -> np.ndarray:
        return self.label > 0


def gp_depth(scene: GaussianScene, camera: Camera) -> Tuple[np.ndarray, np.ndarray]:
    """Camera-frame z per centroid plus a validity mask (z > 0)."""
    w2c = camera.world_to_camera
    z = scene.centroid.astype(np.float64) @ w2c[2, :3] + w2c[2, 3]
    valid = z > 0
    depth = np.where(valid, z, np.nan)
    return depth, valid


def reproject(
    view: ProjectedView,
    scene: GaussianScene,
    camera: Camera,
    observation: MaskObservation,
    codebook: LatentCodebook,
    visibility_floor: float = DEFAULT_VISIBILITY_FLOOR,
) -> GpLabeling:
    """Aggregate mask-label latents onto primitives and argmax-decode them."""
    max_label = int(observation.label_map.max(initial=0))
    if max_label > codebook.m:
        raise ValidationError(
            f"codebook holds {codebook.m} labels but view {observation.view_id} uses {max_label}"
        )
    latent_sum, weight_sum = view.reproject_latents(
        observation.label_map, codebook.with_zero_row()
    )
    seen = weight_sum >= visibility_floor
    latent = np.zeros_like(latent_sum)
    latent[seen] = latent_sum[seen] / weight_sum[seen, None]

    label = np.zeros(len(scene), dtype=np.uint32)
    confidence = np.zeros(len(scene), dtype=np.float64)
    if np.any(seen):
        sims = latent[seen] @ codebook.rows.T
        norms = np.linalg.norm(latent[seen], axis=1)
        # cos(0, Y_t) is defined as 0; argmax ties resolve to the lower id.
        with np.errstate(invalid="ignore", divide="ignore"):
            cos = np.where(norms[:, None] > 0, sims / np.maximum(norms[:, None], 1e-300), 0.0)
        best = np.argmax(cos, axis=1)
        label[seen] = best.astype(np.uint32) + 1
        confidence[seen] = cos[np.arange(best.size), best]

    depth, _ = gp_depth(scene, camera)
    return GpLabeling(
        view_id=observation.view_id,
        level=observation.level,
        latent=latent,
        label=label,
        confidence=confidence,
        depth=depth,
        total_weight=weight_sum,
    )


def save_labeling(labeling: GpLabeling, path: str | Path) -> None:
    n = labeling.label.shape[0]
    header = LABELS_MAGIC + struct.pack("<IIII", 1, labeling.view_id, labeling.level, n)
    depth = np.where(np.isnan(labeling.depth), -1.0, labeling.depth)
    Path(path).write_bytes(
        header
        + labeling.label.astype("<u4").tobytes()
        + depth.astype("<f4").tobytes()
        + labeling.total_weight.astype("<f4").tobytes()
    )


def load_labeling(path: str | Path) -> GpLabeling:
    data = Path(path).read_bytes()
    if len(data) < 20 or data[:4] != LABELS_MAGIC:
        raise FormatError("not a labeling file (bad magic)")
    version, view_id, level, n = struct.unpack("<IIII", data[4:20])
    if version != 1:
        raise FormatError(f"unsupported labeling file version {version}")
    need = 20 + n * 12
    if len(data) < need:
        raise FormatError("labeling file truncated")
    label = np.frombuffer(data[20:20 + 4 * n], dtype="<u4").copy()
    depth = np.frombuffer(data[20 + 4 * n:20 + 8 * n], dtype="<f4").astype(np.float64)
    weight = np.frombuffer(data[20 + 8 * n:20 + 12 * n], dtype="<f4").astype(np.float64)
    depth = np.where(depth < 0, np.nan, depth)
    return GpLabeling(
        view_id=view_id,
        level=level,
        latent=np.zeros((n, 0)),
        label=label,
        confidence=np.zeros(n),
        depth=depth,
        total_weight=weight,
    )
