"""HTTP/JSON service over a built field: summary, picks, queries, renders.

All endpoints are read-only over an immutable snapshot; identical
requests yield identical responses. The optional external text embedder
is called with a bounded timeout and failures surface as 502 errors.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from io import BytesIO
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import httpx
import numpy as np
from fastapi import FastAPI, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel
from scipy.spatial import cKDTree

from .hierarchy import SuperpointHierarchy
from .query import QuerySpec, query as run_query
from .render import ProjectedView, render_presence
from .scene_io import import_hierarchy, load_cameras, load_scene
from .types import Camera, GaussianScene

CANONICAL_PHRASES = ("object", "things", "stuff", "texture")
EMBEDDER_TIMEOUT = 5.0


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class TextEmbedder:
    """Client for an external text-embedding endpoint.

    POSTs {"text": ...} and expects {"embedding": [f32; d_sem]}; the
    vector is validated and renormalized before use.
    """

    def __init__(self, url: str, d_sem: int, timeout: float = EMBEDDER_TIMEOUT, transport=None):
        self.url = url
        self.d_sem = d_sem
        self.client = httpx.Client(timeout=timeout, transport=transport)

    def embed(self, text: str) -> np.ndarray:
        try:
            response = self.client.post(self.url, json={"text": text})
            response.raise_for_status()
            payload = response.json()
        except httpx.HTTPError as exc:
            raise ServiceError(502, "embedder_unreachable", f"text embedder failed: {exc}") from exc
        embedding = np.asarray(payload.get("embedding", []), dtype=np.float64)
        if embedding.shape != (self.d_sem,):
            raise ServiceError(
                502,
                "embedder_dimension",
                f"embedder returned shape {embedding.shape}, field expects ({self.d_sem},)",
            )
        norm = float(np.linalg.norm(embedding))
        if norm == 0.0:
            raise ServiceError(502, "embedder_zero", "embedder returned a zero vector")
        return embedding / norm


@dataclass
class FieldBundle:
    hierarchy: SuperpointHierarchy
    scene: GaussianScene
    cameras: Optional[Dict[int, Camera]] = None

    def __post_init__(self) -> None:
        self.kdtree = cKDTree(self.scene.centroid.astype(np.float64))
        self._argmax_cache: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}

    @classmethod
    def load(
        cls,
        field_path: str | Path,
        scene_path: str | Path,
        cameras_path: Optional[str | Path] = None,
    ) -> "FieldBundle":
        cameras = None
        if cameras_path is not None and Path(cameras_path).exists():
            cameras = load_cameras(cameras_path)
        return cls(
            hierarchy=import_hierarchy(field_path),
            scene=load_scene(scene_path),
            cameras=cameras,
        )

    def view(self, view_id: int) -> ProjectedView:
        if self.cameras is None or view_id not in self.cameras:
            raise ServiceError(404, "unknown_view", f"no camera for view {view_id}")
        return ProjectedView(self.scene, self.cameras[view_id])

    def argmax(self, view_id: int) -> Tuple[np.ndarray, np.ndarray]:
        if view_id not in self._argmax_cache:
            self._argmax_cache[view_id] = self.view(view_id).argmax_weight()
        return self._argmax_cache[view_id]

    def superpoint_info(self, level: int, sp_id: int) -> dict:
        if level not in (1, 2, 3):
            raise ServiceError(422, "bad_level", f"level must be 1..3, got {level}")
        if not 0 <= sp_id < self.hierarchy.count(level):
            raise ServiceError(404, "unknown_superpoint", f"no superpoint {sp_id} at level {level}")
        members = self.hierarchy.members(level, sp_id)
        pts = self.scene.centroid[members]
        info = {
            "level": level,
            "id": sp_id,
            "member_count": int(members.size),
            "bbox": {
                "min": pts.min(axis=0).tolist(),
                "max": pts.max(axis=0).tolist(),
            },
            "queryable": bool(self.hierarchy.queryable[level][sp_id]),
            "feature": self.hierarchy.semantic_feature[level][sp_id].tolist(),
        }
        if level < 3:
            info["parent"] = int(self.hierarchy.parents[level + 1][sp_id])
        return info


class PickBody(BaseModel):
    point: Optional[List[float]] = None
    view: Optional[int] = None
    pixel: Optional[List[float]] = None
    level: int = 3


class QueryBody(BaseModel):
    embedding: Optional[List[float]] = None
    text: Optional[str] = None
    canonicals: Optional[List[List[float]]] = None
    levels: List[int] = [3]
    threshold: Optional[float] = 0.5
    top_k: Optional[int] = None
    include_gps: bool = False


def create_app(
    bundle: FieldBundle,
    embedder_url: Optional[str] = None,
    embedder_transport=None,
) -> FastAPI:
    app = FastAPI(title="superfield", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    hierarchy = bundle.hierarchy
    embedder = (
        TextEmbedder(embedder_url, hierarchy.d_sem, transport=embedder_transport)
        if embedder_url
        else None
    )
    canonical_cache: Dict[str, np.ndarray] = {}

    @app.exception_handler(ServiceError)
    async def service_error_handler(_, exc: ServiceError):
        return JSONResponse(
            status_code=exc.status,
            content={"error": {"code": exc.code, "message": exc.message}},
        )

    @app.get("/scene/summary")
    def scene_summary() -> dict:
        return {
            "gp_count": hierarchy.n_gp,
            "superpoint_counts": {str(q): hierarchy.count(q) for q in range(4)},
            "d_sem": hierarchy.d_sem,
            "progressive": hierarchy.progressive,
            "views": sorted(bundle.cameras) if bundle.cameras else [],
        }

    @app.get("/points")
    def points(level: int = 3, stride: int = 1) -> Response:
        if level not in (0, 1, 2, 3):
            raise ServiceError(422, "bad_level", f"level must be 0..3, got {level}")
        if stride < 1:
            raise ServiceError(422, "bad_stride", "stride must be >= 1")
        pts = bundle.scene.centroid[::stride].astype("<f4")
        ids = hierarchy.levels[level][::stride].astype("<u4")
        buf = BytesIO()
        buf.write(struct.pack("<I", pts.shape[0]))
        buf.write(pts.tobytes())
        buf.write(ids.tobytes())
        return Response(content=buf.getvalue(), media_type="application/octet-stream")

    @app.post("/pick")
    def pick(body: PickBody) -> dict:
        if body.level not in (0, 1, 2, 3):
            raise ServiceError(422, "bad_level", f"level must be 0..3, got {body.level}")
        if body.point is not None:
            if len(body.point) != 3:
                raise ServiceError(422, "bad_point", "point must have 3 coordinates")
            _, gp = bundle.kdtree.query(np.asarray(body.point, dtype=np.float64))
            gp = int(gp)
        elif body.view is not None and body.pixel is not None:
            if len(body.pixel) != 2:
                raise ServiceError(422, "bad_pixel", "pixel must be [x, y]")
            gp_img, _ = bundle.argmax(body.view)
            x, y = int(body.pixel[0]), int(body.pixel[1])
            if not (0 <= y < gp_img.shape[0] and 0 <= x < gp_img.shape[1]):
                raise ServiceError(422, "bad_pixel", "pixel outside the view")
            gp = int(gp_img[y, x])
            if gp < 0:
                raise ServiceError(404, "no_geometry", "no geometry under that pixel")
        else:
            raise ServiceError(422, "bad_pick", "provide either point or (view, pixel)")
        sp = int(hierarchy.levels[body.level][gp])
        chain = hierarchy.ancestor_chain(body.level, sp)
        members = hierarchy.members(body.level, sp)
        pts = bundle.scene.centroid[members]
        return {
            "gp_index": gp,
            "level": body.level,
            "superpoint_id": sp,
            "chain": {str(q): int(i) for q, i in chain.items()},
            "member_count": int(members.size),
            "bbox": {"min": pts.min(axis=0).tolist(), "max": pts.max(axis=0).tolist()},
        }

    @app.post("/query")
    def query_endpoint(body: QueryBody) -> dict:
        if body.embedding is not None:
            embedding = np.asarray(body.embedding, dtype=np.float64)
            if embedding.shape != (hierarchy.d_sem,):
                raise ServiceError(
                    422, "bad_embedding",
                    f"embedding has {embedding.size} dims, field expects {hierarchy.d_sem}",
                )
        elif body.text is not None:
            if embedder is None:
                raise ServiceError(422, "no_embedder", "no text embedder configured; pass an embedding")
            embedding = embedder.embed(body.text)
        else:
            raise ServiceError(422, "bad_query", "provide embedding or text")
        if body.canonicals is not None:
            canonicals = np.asarray(body.canonicals, dtype=np.float64)
        elif embedder is not None:
            rows = []
            for phrase in CANONICAL_PHRASES:
                if phrase not in canonical_cache:
                    canonical_cache[phrase] = embedder.embed(phrase)
                rows.append(canonical_cache[phrase])
            canonicals = np.stack(rows)
        else:
            raise ServiceError(
                422, "no_canonicals", "pass canonical embeddings or configure an embedder"
            )
        try:
            spec = QuerySpec(
                query_embedding=embedding,
                canonical_embeddings=canonicals,
                levels=tuple(body.levels),
                threshold=body.threshold,
                top_k=body.top_k,
            )
        except Exception as exc:
            raise ServiceError(422, "bad_query", str(exc)) from exc
        result = run_query(hierarchy, spec)
        payload = {
            "selected": {
                str(level): [
                    {"id": int(i), "score": float(result.scores[level][i])}
                    for i in result.selected[level]
                ]
                for level in result.selected
            },
            "gp_count": int(result.gp_indices.size),
        }
        if body.include_gps:
            payload["gp_indices"] = result.gp_indices.tolist()
        return payload

    @app.get("/superpoint/{level}/{sp_id}")
    def superpoint(level: int, sp_id: int) -> dict:
        return bundle.superpoint_info(level, sp_id)

    @app.get("/superpoint/{level}/{sp_id}/members")
    def superpoint_members(level: int, sp_id: int) -> dict:
        info = bundle.superpoint_info(level, sp_id)
        members = hierarchy.members(level, sp_id)
        info["members"] = members.tolist()
        return info

    @app.get("/render")
    def render(
        view: int,
        ids: Optional[str] = None,
        level: Optional[int] = None,
        superpoint: Optional[int] = None,
        binary: bool = True,
    ) -> Response:
        if ids is not None:
            try:
                gp_ids = np.array([int(x) for x in ids.split(",") if x], dtype=np.int64)
            except ValueError as exc:
                raise ServiceError(422, "bad_ids", f"ids must be comma-separated ints: {exc}")
        elif level is not None and superpoint is not None:
            bundle.superpoint_info(level, superpoint)
            gp_ids = hierarchy.members(level, superpoint)
        else:
            raise ServiceError(422, "bad_render", "provide ids or (level, superpoint)")
        bad = gp_ids[(gp_ids < 0) | (gp_ids >= hierarchy.n_gp)]
        if bad.size:
            raise ServiceError(422, "bad_ids", f"gp index {int(bad[0])} out of range")
        soft, hard = render_presence(bundle.view(view), gp_ids)
        img = (
            hard.astype(np.uint16) * 65535
            if binary
            else np.clip(soft * 65535.0, 0, 65535).astype(np.uint16)
        )
        h, w = img.shape
        payload = f"P5\n{w} {h}\n65535\n".encode("ascii") + img.astype(">u2").tobytes()
        return Response(content=payload, media_type="image/x-portable-graymap")

    return app
