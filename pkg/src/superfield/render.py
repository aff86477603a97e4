"""Forward-only splatting: projection, alpha compositing, presence renders.

No gradients, no view-dependent color. The rasterizer exposes the
per-primitive compositing weights (alpha_k * T_k) that downstream feature
reprojection and visibility aggregation consume.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .types import Camera, GaussianPrimitive, GaussianScene

log = logging.getLogger(__name__)

PRESENCE_THRESHOLD = 0.5


@dataclass(frozen=True)
class RenderConfig:
    alpha_max: float = 0.99
    alpha_cut: float = 1e-4   # per-pixel alphas below this never composite
    w_min: float = 1e-4       # compositing weights below this are dropped
    near_plane: float = 0.01
    cov_floor: float = 0.3    # px^2, minimum screen-covariance eigenvalue
    tile_size: int = 16


@dataclass
class ScreenSplat:
    gp_index: int
    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float
    base_opacity: float


@dataclass
class PixelContribution:
    gp_index: int
    alpha: float
    transmittance: float
    weight: float


def _quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    q = q.astype(np.float64)
    q = q / np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    r = np.empty((q.shape[0], 3, 3))
    r[:, 0, 0] = 1 - 2 * (y * y + z * z)
    r[:, 0, 1] = 2 * (x * y - w * z)
    r[:, 0, 2] = 2 * (x * z + w * y)
    r[:, 1, 0] = 2 * (x * y + w * z)
    r[:, 1, 1] = 1 - 2 * (x * x + z * z)
    r[:, 1, 2] = 2 * (y * z - w * x)
    r[:, 2, 0] = 2 * (x * z - w * y)
    r[:, 2, 1] = 2 * (y * z + w * x)
    r[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return r


def scene_covariances(scene: GaussianScene) -> np.ndarray:
    """World-space 3x3 covariances R S S^T R^T, shape (n, 3, 3)."""
    rot = _quat_to_rotmat(scene.rotation)
    s2 = scene.scale.astype(np.float64) ** 2
    return np.einsum("nij,nj,nkj->nik", rot, s2, rot)


def _floor_eigenvalues(cov: np.ndarray, floor: float) -> np.ndarray:
    """Clamp eigenvalues of symmetric 2x2 matrices (packed a, b, c) to >= floor."""
    a, b, c = cov[:, 0], cov[:, 1], cov[:, 2]
    mean = 0.5 * (a + c)
    disc = np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
    lam1 = mean + disc
    lam2 = mean - disc
    needs = lam2 < floor
    if not np.any(needs):
        return cov
    out = cov.copy()
    theta = 0.5 * np.arctan2(2.0 * b[needs], a[needs] - c[needs])
    ct, st = np.cos(theta), np.sin(theta)
    l1 = np.maximum(lam1[needs], floor)
    l2 = np.maximum(lam2[needs], floor)
    out[needs, 0] = l1 * ct * ct + l2 * st * st
    out[needs, 1] = (l1 - l2) * ct * st
    out[needs, 2] = l1 * st * st + l2 * ct * ct
    return out


class ProjectedView:
    """Depth-sorted screen splats of one scene/camera pair (culled removed)."""

    def __init__(self, scene: GaussianScene, camera: Camera, config: RenderConfig = RenderConfig()):
        self.camera = camera
        self.config = config
        self.n_gp = len(scene)

        w2c = camera.world_to_camera
        pts = scene.centroid.astype(np.float64)
        cam_pts = pts @ w2c[:3, :3].T + w2c[:3, 3]
        z = cam_pts[:, 2]
        alive = z > config.near_plane
        alive &= scene.opacity.astype(np.float64) > config.alpha_cut
        idx = np.nonzero(alive)[0]

        cam_pts = cam_pts[idx]
        z = z[idx]
        mean2d = np.empty((idx.size, 2))
        mean2d[:, 0] = camera.fx * cam_pts[:, 0] / z + camera.cx
        mean2d[:, 1] = camera.fy * cam_pts[:, 1] / z + camera.cy

        cov3d = scene_covariances(scene)[idx]
        rot = w2c[:3, :3]
        jac = np.zeros((idx.size, 2, 3))
        jac[:, 0, 0] = camera.fx / z
        jac[:, 0, 2] = -camera.fx * cam_pts[:, 0] / (z * z)
        jac[:, 1, 1] = camera.fy / z
        jac[:, 1, 2] = -camera.fy * cam_pts[:, 1] / (z * z)
        m = jac @ rot
        cov2d_full = np.einsum("nij,njk,nlk->nil", m, cov3d, m)
        cov2d = np.stack([cov2d_full[:, 0, 0], cov2d_full[:, 0, 1], cov2d_full[:, 1, 1]], axis=1)

        finite = np.isfinite(cov2d).all(axis=1)
        if not finite.all():
            log.warning("skipping %d splats with non-finite screen covariance", int((~finite).sum()))
            idx, mean2d, cov2d, z = idx[finite], mean2d[finite], cov2d[finite], z[finite]

        cov2d = _floor_eigenvalues(cov2d, config.cov_floor)
        opacity = scene.opacity.astype(np.float64)[idx]

        # Footprint bound: alpha >= alpha_cut within d' Sigma^-1 d <= qmax.
        qmax = 2.0 * np.log(opacity / config.alpha_cut)
        rx = np.sqrt(qmax * cov2d[:, 0])
        ry = np.sqrt(qmax * cov2d[:, 2])
        x0 = np.ceil(mean2d[:, 0] - rx - 0.5).astype(np.int64)
        x1 = np.floor(mean2d[:, 0] + rx - 0.5).astype(np.int64) + 1
        y0 = np.ceil(mean2d[:, 1] - ry - 0.5).astype(np.int64)
        y1 = np.floor(mean2d[:, 1] + ry - 0.5).astype(np.int64) + 1
        x0 = np.clip(x0, 0, camera.width)
        x1 = np.clip(x1, 0, camera.width)
        y0 = np.clip(y0, 0, camera.height)
        y1 = np.clip(y1, 0, camera.height)
        onscreen = (x0 < x1) & (y0 < y1)

        idx = idx[onscreen]
        order = np.argsort(z[onscreen], kind="stable")

        self.gp_index = idx[order].astype(np.int32)
        self.mean2d = np.ascontiguousarray(mean2d[onscreen][order])
        self.cov2d = np.ascontiguousarray(cov2d[onscreen][order])
        self.depth = np.ascontiguousarray(z[onscreen][order])
        self.opacity = np.ascontiguousarray(opacity[onscreen][order])
        self.bbox = np.ascontiguousarray(
            np.stack([x0, x1, y0, y1], axis=1)[onscreen][order].astype(np.int32)
        )
        det = self.cov2d[:, 0] * self.cov2d[:, 2] - self.cov2d[:, 1] ** 2
        self.inv_cov = np.stack(
            [self.cov2d[:, 2] / det, -self.cov2d[:, 1] / det, self.cov2d[:, 0] / det], axis=1
        )
        self.inv_cov = np.ascontiguousarray(self.inv_cov)

    def __len__(self) -> int:
        return self.gp_index.shape[0]

    def _run(self, **outputs) -> None:
        cfg = self.config
        _kernels.composite_view(
            self.mean2d,
            self.inv_cov,
            self.opacity,
            self.gp_index,
            self.bbox,
            self.camera.height,
            self.camera.width,
            cfg.tile_size,
            cfg.alpha_max,
            cfg.alpha_cut,
            cfg.w_min,
            **outputs,
        )

    def visibility(self) -> np.ndarray:
        """Per-primitive summed compositing weight over all pixels."""
        vis = np.zeros(self.n_gp, dtype=np.float64)
        self._run(vis_out=vis)
        return vis

    def reproject_latents(self, label_map: np.ndarray, codebook: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Weight-aggregated codebook vectors per primitive.

        Returns (latent_sum, weight_sum); label 0 rows contribute zeros
        (codebook row 0 must be the zero vector).
        """
        d = codebook.shape[1]
        latent = np.zeros((self.n_gp, d), dtype=np.float64)
        vis = np.zeros(self.n_gp, dtype=np.float64)
        self._run(
            vis_out=vis,
            label_map=np.ascontiguousarray(label_map, dtype=np.uint32),
            codebook=np.ascontiguousarray(codebook, dtype=np.float64),
            latent_out=latent,
        )
        return latent, vis

    def presence(self, selected: np.ndarray) -> np.ndarray:
        """Soft presence mask: per-pixel sum of selected splats' weights."""
        sel = np.zeros(self.n_gp, dtype=np.uint8)
        sel[selected] = 1
        img = np.zeros((self.camera.height, self.camera.width), dtype=np.float32)
        self._run(select=sel, presence_out=img)
        return img

    def accumulation(self) -> Tuple[np.ndarray, np.ndarray]:
        """(total weight image, residual transmittance image)."""
        accum = np.zeros((self.camera.height, self.camera.width), dtype=np.float32)
        residual = np.ones((self.camera.height, self.camera.width), dtype=np.float32)
        self._run(accum_out=accum, residual_out=residual)
        return accum, residual

    def argmax_weight(self) -> Tuple[np.ndarray, np.ndarray]:
        """Per-pixel dominant contributor: (gp index or -1, its weight)."""
        gp = np.full((self.camera.height, self.camera.width), -1, dtype=np.int32)
        w = np.zeros((self.camera.height, self.camera.width), dtype=np.float32)
        self._run(argmax_gp_out=gp, argmax_w_out=w)
        return gp, w


def project_view(scene: GaussianScene, camera: Camera, config: RenderConfig = RenderConfig()) -> ProjectedView:
    return ProjectedView(scene, camera, config)


def project(
    primitive: GaussianPrimitive, camera: Camera, config: RenderConfig = RenderConfig()
) -> Optional[ScreenSplat]:
    """Project one primitive; returns None when culled."""
    scene = GaussianScene(
        centroid=primitive.centroid[None, :],
        rotation=primitive.rotation[None, :],
        scale=primitive.scale[None, :],
        opacity=np.array([primitive.opacity], dtype=np.float32),
        color=primitive.color[None, :],
        normal=primitive.normal[None, :],
    )
    view = ProjectedView(scene, camera, config)
    if len(view) == 0:
        return None
    cov = np.array(
        [[view.cov2d[0, 0], view.cov2d[0, 1]], [view.cov2d[0, 1], view.cov2d[0, 2]]]
    )
    return ScreenSplat(
        gp_index=0,
        mean2d=view.mean2d[0].copy(),
        cov2d=cov,
        depth=float(view.depth[0]),
        base_opacity=float(view.opacity[0]),
    )


def composite_alphas(
    alphas: Sequence[float], config: RenderConfig = RenderConfig()
) -> Tuple[np.ndarray, np.ndarray, float, np.ndarray]:
    """Front-to-back compositing of a depth-ordered alpha sequence.

    Returns (weights, transmittances, residual, kept) over the kept
    contributions; alphas below alpha_cut or with weight below w_min are
    skipped without touching the transmittance.
    """
    weights: List[float] = []
    trans: List[float] = []
    kept: List[int] = []
    t = 1.0
    for k, alpha in enumerate(alphas):
        alpha = min(float(alpha), config.alpha_max)
        if alpha < config.alpha_cut:
            continue
        w = alpha * t
        if w < config.w_min:
            continue
        weights.append(w)
        trans.append(t)
        kept.append(k)
        t *= 1.0 - alpha
    return np.asarray(weights), np.asarray(trans), t, np.asarray(kept, dtype=np.int64)


def splat_alpha_at(splat: ScreenSplat, pixel: Sequence[float], config: RenderConfig) -> float:
    d = np.asarray(pixel, dtype=np.float64) - splat.mean2d
    cov = splat.cov2d.astype(np.float64)
    det = cov[0, 0] * cov[1, 1] - cov[0, 1] ** 2
    if det <= 0 or not np.isfinite(det):
        raise np.linalg.LinAlgError("singular screen covariance")
    inv = np.array([[cov[1, 1], -cov[0, 1]], [-cov[0, 1], cov[0, 0]]]) / det
    q = float(d @ inv @ d)
    return min(splat.base_opacity * np.exp(-0.5 * q), config.alpha_max)


def composite_pixel(
    splats: Sequence[ScreenSplat],
    pixel: Sequence[float],
    config: RenderConfig = RenderConfig(),
) -> Tuple[List[PixelContribution], float]:
    """Composite the splats hitting one pixel, front to back.

    Returns the kept contributions plus the residual transmittance;
    invariant: sum(weights) + residual == 1 (exact up to fp rounding).
    """
    order = sorted(range(len(splats)), key=lambda i: (splats[i].depth, splats[i].gp_index))
    contributions: List[PixelContribution] = []
    t = 1.0
    for i in order:
        try:
            alpha = splat_alpha_at(splats[i], pixel, config)
        except np.linalg.LinAlgError:
            log.warning("skipping splat %d: singular covariance", splats[i].gp_index)
            continue
        if alpha < config.alpha_cut:
            continue
        w = alpha * t
        if w < config.w_min:
            continue
        contributions.append(
            PixelContribution(gp_index=splats[i].gp_index, alpha=alpha, transmittance=t, weight=w)
        )
        t *= 1.0 - alpha
    return contributions, t


def render_presence(
    view: ProjectedView, selected: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Soft and thresholded presence masks for a primitive selection."""
    soft = view.presence(np.asarray(selected, dtype=np.int64))
    return soft, soft > PRESENCE_THRESHOLD


def gp_visibility(view: ProjectedView) -> np.ndarray:
    return view.visibility()
