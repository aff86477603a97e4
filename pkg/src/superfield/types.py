"""Core domain types shared across the package.

The scene is kept as a struct-of-arrays (`GaussianScene`) for vectorized
processing; `GaussianPrimitive` is the per-element view used at API
boundaries and in tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterator

import numpy as np

QUAT_NORM_TOL = 1e-4
NORMAL_NORM_TOL = 1e-4
ROTATION_ORTHO_TOL = 1e-5


class SuperfieldError(Exception):
    """Base class for all package errors."""


class FormatError(SuperfieldError):
    """Raised when an on-disk artifact violates its documented format."""


class ValidationError(SuperfieldError):
    """Raised when an in-memory structure violates a documented invariant."""


@dataclass(frozen=True)
class GaussianPrimitive:
    """One scene atom: centroid, orientation/scale, opacity, color, normal.

    `rotation` is a unit quaternion (w, x, y, z); `scale` holds per-axis
    extents in scene units (one entry may be ~0 for 2D disks); the 3x3
    covariance is always derived, never stored.
    """

    centroid: np.ndarray
    rotation: np.ndarray
    scale: np.ndarray
    opacity: float
    color: np.ndarray
    normal: np.ndarray

    def validate(self) -> None:
        qn = float(np.linalg.norm(self.rotation))
        if abs(qn - 1.0) > QUAT_NORM_TOL:
            raise ValidationError(f"quaternion norm {qn} outside 1 +/- {QUAT_NORM_TOL}")
        if not 0.0 <= self.opacity <= 1.0:
            raise ValidationError(f"opacity {self.opacity} outside [0, 1]")
        if np.any(self.scale < 0):
            raise ValidationError("negative scale entry")
        nn = float(np.linalg.norm(self.normal))
        if abs(nn - 1.0) > NORMAL_NORM_TOL:
            raise ValidationError(f"normal norm {nn} outside 1 +/- {NORMAL_NORM_TOL}")


class GaussianScene:
    """Struct-of-arrays container for all primitives of one scene.

    Float32 storage mirrors the on-disk layout so that save/load round
    trips are bit-exact.
    """

    def __init__(
        self,
        centroid: np.ndarray,
        rotation: np.ndarray,
        scale: np.ndarray,
        opacity: np.ndarray,
        color: np.ndarray,
        normal: np.ndarray,
    ) -> None:
        n = centroid.shape[0]
        for name, arr, cols in (
            ("centroid", centroid, 3),
            ("rotation", rotation, 4),
            ("scale", scale, 3),
            ("color", color, 3),
            ("normal", normal, 3),
        ):
            if arr.shape != (n, cols):
                raise ValidationError(f"{name} shape {arr.shape} != ({n}, {cols})")
        if opacity.shape != (n,):
            raise ValidationError(f"opacity shape {opacity.shape} != ({n},)")
        self.centroid = np.ascontiguousarray(centroid, dtype=np.float32)
        self.rotation = np.ascontiguousarray(rotation, dtype=np.float32)
        self.scale = np.ascontiguousarray(scale, dtype=np.float32)
        self.opacity = np.ascontiguousarray(opacity, dtype=np.float32)
        self.color = np.ascontiguousarray(color, dtype=np.float32)
        self.normal = np.ascontiguousarray(normal, dtype=np.float32)

    def __len__(self) -> int:
        return self.centroid.shape[0]

    def __getitem__(self, i: int) -> GaussianPrimitive:
        return GaussianPrimitive(
            centroid=self.centroid[i].copy(),
            rotation=self.rotation[i].copy(),
            scale=self.scale[i].copy(),
            opacity=float(self.opacity[i]),
            color=self.color[i].copy(),
            normal=self.normal[i].copy(),
        )

    def __iter__(self) -> Iterator[GaussianPrimitive]:
        for i in range(len(self)):
            yield self[i]

    def validate(self) -> None:
        qn = np.linalg.norm(self.rotation.astype(np.float64), axis=1)
        bad = np.nonzero(np.abs(qn - 1.0) > QUAT_NORM_TOL)[0]
        if bad.size:
            raise ValidationError(f"non-unit quaternion at index {bad[0]}")
        if np.any(self.opacity < 0) or np.any(self.opacity > 1):
            raise ValidationError("opacity outside [0, 1]")
        if np.any(self.scale < 0):
            raise ValidationError("negative scale entry")
        nn = np.linalg.norm(self.normal.astype(np.float64), axis=1)
        bad = np.nonzero(np.abs(nn - 1.0) > NORMAL_NORM_TOL)[0]
        if bad.size:
            raise ValidationError(f"non-unit normal at index {bad[0]}")


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: intrinsics in pixels plus a rigid world-to-camera map."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    world_to_camera: np.ndarray  # 4x4, row-major convention

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError(f"focal lengths must be positive, got ({self.fx}, {self.fy})")
        w2c = np.asarray(self.world_to_camera, dtype=np.float64)
        if w2c.shape != (4, 4):
            raise ValidationError(f"world_to_camera shape {w2c.shape} != (4, 4)")
        rot = w2c[:3, :3]
        err = np.abs(rot @ rot.T - np.eye(3)).max()
        if err > ROTATION_ORTHO_TOL:
            raise ValidationError(f"rotation block not orthonormal (max error {err:.2e})")
        object.__setattr__(self, "world_to_camera", w2c)

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_camera[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_camera[:3, 3]


@dataclass
class MaskObservation:
    """Per-view, per-level integer label map plus the feature-row lookup.

    Label 0 marks unassigned pixels; labels are contiguous 1..M after
    loading. `feature_row_of` maps each local mask id to its row in the
    global mask-feature matrix.
    """

    view_id: int
    level: int
    label_map: np.ndarray  # (H, W) uint16/uint32, 0 = unassigned
    feature_row_of: Dict[int, int] = field(default_factory=dict)

    @property
    def mask_count(self) -> int:
        return int(self.label_map.max(initial=0))

    def validate(self) -> None:
        if self.level not in (1, 2, 3):
            raise ValidationError(f"mask level {self.level} not in {{1, 2, 3}}")
        labels = np.unique(self.label_map)
        labels = labels[labels > 0]
        missing = [int(t) for t in labels if int(t) not in self.feature_row_of]
        if missing:
            raise ValidationError(f"labels without feature rows: {missing}")


class MaskFeatureMatrix:
    """Global matrix of per-mask semantic features, one unit-norm row per mask."""

    def __init__(self, rows: np.ndarray) -> None:
        rows = np.ascontiguousarray(rows, dtype=np.float32)
        if rows.ndim != 2:
            raise ValidationError(f"feature matrix must be 2D, got shape {rows.shape}")
        norms = np.linalg.norm(rows.astype(np.float64), axis=1)
        zero = np.nonzero(norms == 0.0)[0]
        if zero.size:
            raise ValidationError(f"zero-norm feature row at index {zero[0]}")
        # Renormalize only rows outside tolerance so canonical inputs round-trip.
        off = np.abs(norms - 1.0) > 1e-6
        if np.any(off):
            rows = rows.copy()
            rows[off] = rows[off] / norms[off, None].astype(np.float32)
        self.rows = rows

    @property
    def m_total(self) -> int:
        return self.rows.shape[0]

    @property
    def d_sem(self) -> int:
        return self.rows.shape[1]
