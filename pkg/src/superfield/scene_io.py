"""Scene, mask, feature, camera and hierarchy file formats.

All binary formats are little-endian and documented in README.md. Design
constraints: load(save(x)) must reproduce x bit-for-bit, and loading the
same bytes twice must yield identical in-memory values.

Scene files are binary PLY in the de-facto splat layout. Header comments
declare field encodings; when absent, the common exporter conventions
apply (logit opacity, log scales, SH-DC color):

    comment superfield_opacity linear|logit
    comment superfield_scale linear|log
    comment superfield_color rgb01|sh_dc

Our writer always emits linear/linear/rgb01 so round trips are exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .types import (
    Camera,
    FormatError,
    GaussianScene,
    MaskFeatureMatrix,
    MaskObservation,
)

SH_C0 = 0.28209479177387814

SCENE_PROPERTIES = (
    "x", "y", "z",
    "nx", "ny", "nz",
    "opacity",
    "f_dc_0", "f_dc_1", "f_dc_2",
    "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
)
REQUIRED_PROPERTIES = tuple(p for p in SCENE_PROPERTIES if not p.startswith("n"))

FEATURE_MAGIC = b"SFEA"
HIERARCHY_MAGIC = b"SHF1"
HIERARCHY_VERSION = 1
MANIFEST_NAME = "masks_manifest.json"


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Batch quaternion (w, x, y, z) to rotation matrices, shape (n, 3, 3)."""
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


# ---------------------------------------------------------------------------
# Scene PLY
# ---------------------------------------------------------------------------

def _parse_ply_header(data: bytes) -> Tuple[List[str], int, Dict[str, str], int]:
    end = data.find(b"end_header\n")
    if end < 0:
        raise FormatError("not a PLY file: missing end_header")
    header = data[:end].decode("ascii", errors="replace")
    lines = header.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise FormatError("not a PLY file: missing 'ply' magic")
    props: List[str] = []
    count = -1
    flags: Dict[str, str] = {}
    fmt_ok = False
    for line in lines[1:]:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            if parts[1] != "binary_little_endian":
                raise FormatError(f"unsupported PLY format {parts[1]!r}")
            fmt_ok = True
        elif parts[0] == "element":
            if parts[1] != "vertex":
                raise FormatError(f"unsupported PLY element {parts[1]!r}")
            count = int(parts[2])
        elif parts[0] == "property":
            if parts[1] != "float":
                raise FormatError(f"unsupported property type {parts[1]!r} for {parts[2]!r}")
            props.append(parts[2])
        elif parts[0] == "comment" and len(parts) >= 3 and parts[1].startswith("superfield_"):
            flags[parts[1]] = parts[2]
    if not fmt_ok:
        raise FormatError("PLY header missing format line")
    if count < 0:
        raise FormatError("PLY header missing vertex element")
    return props, count, flags, end + len(b"end_header\n")


def load_scene(path: str | Path) -> GaussianScene:
    """Load a splat scene; see module docstring for the format contract."""
    data = Path(path).read_bytes()
    props, count, flags, offset = _parse_ply_header(data)
    missing = [p for p in REQUIRED_PROPERTIES if p not in props]
    if missing:
        raise FormatError(f"scene file missing required attribute(s): {', '.join(missing)}")
    body = data[offset:]
    expected = count * len(props) * 4
    if len(body) < expected:
        raise FormatError(f"scene body truncated: {len(body)} bytes < {expected} expected")
    raw = np.frombuffer(body[:expected], dtype="<f4").reshape(count, len(props))
    col = {name: raw[:, i] for i, name in enumerate(props)}

    for name in props:
        bad = np.nonzero(~np.isfinite(col[name]))[0]
        if bad.size:
            raise FormatError(f"non-finite value in attribute {name!r} at index {int(bad[0])}")

    centroid = np.stack([col["x"], col["y"], col["z"]], axis=1)

    opacity = col["opacity"].copy()
    if flags.get("superfield_opacity", "logit") == "logit":
        opacity = _sigmoid(opacity.astype(np.float64)).astype(np.float32)
    opacity = np.clip(opacity, 0.0, 1.0)

    scale = np.stack([col["scale_0"], col["scale_1"], col["scale_2"]], axis=1)
    if flags.get("superfield_scale", "log") == "log":
        scale = np.exp(scale.astype(np.float64)).astype(np.float32)
    scale = np.maximum(scale, 0.0)

    color = np.stack([col["f_dc_0"], col["f_dc_1"], col["f_dc_2"]], axis=1)
    if flags.get("superfield_color", "sh_dc") == "sh_dc":
        color = (0.5 + SH_C0 * color.astype(np.float64)).astype(np.float32)
    color = np.clip(color, 0.0, 1.0)

    rotation = np.stack([col["rot_0"], col["rot_1"], col["rot_2"], col["rot_3"]], axis=1)
    qn = np.linalg.norm(rotation.astype(np.float64), axis=1)
    zero_q = np.nonzero(qn == 0.0)[0]
    if zero_q.size:
        raise FormatError(f"zero quaternion at index {int(zero_q[0])}")
    off = np.abs(qn - 1.0) > 1e-6
    if np.any(off):
        rotation = rotation.copy()
        rotation[off] = (rotation[off].astype(np.float64) / qn[off, None]).astype(np.float32)

    if all(p in props for p in ("nx", "ny", "nz")):
        normal = np.stack([col["nx"], col["ny"], col["nz"]], axis=1).copy()
        nn = np.linalg.norm(normal.astype(np.float64), axis=1)
        absent = nn == 0.0
        off = (~absent) & (np.abs(nn - 1.0) > 1e-6)
        if np.any(off):
            normal[off] = (normal[off].astype(np.float64) / nn[off, None]).astype(np.float32)
    else:
        normal = np.zeros((count, 3), dtype=np.float32)
        absent = np.ones(count, dtype=bool)
    if np.any(absent):
        # Derive from the smallest-scale axis of the primitive frame.
        rot = _quat_to_rotmat(rotation[absent])
        axis = np.argmin(scale[absent], axis=1)
        derived = rot[np.arange(rot.shape[0]), :, axis]
        normal[absent] = derived.astype(np.float32)

    return GaussianScene(centroid, rotation, scale, opacity, color, normal)


def save_scene(scene: GaussianScene, path: str | Path) -> None:
    """Write a scene with linear encodings (exact round trip under load_scene)."""
    n = len(scene)
    header = [
        "ply",
        "format binary_little_endian 1.0",
        "comment superfield_opacity linear",
        "comment superfield_scale linear",
        "comment superfield_color rgb01",
        f"element vertex {n}",
    ]
    header += [f"property float {p}" for p in SCENE_PROPERTIES]
    header.append("end_header")
    body = np.concatenate(
        [
            scene.centroid,
            scene.normal,
            scene.opacity[:, None],
            scene.color,
            scene.scale,
            scene.rotation,
        ],
        axis=1,
    ).astype("<f4")
    Path(path).write_bytes("\n".join(header).encode("ascii") + b"\n" + body.tobytes())


# ---------------------------------------------------------------------------
# 16-bit PGM label maps
# ---------------------------------------------------------------------------

def write_pgm16(path: str | Path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.ndim != 2:
        raise FormatError(f"PGM image must be 2D, got shape {img.shape}")
    if img.min(initial=0) < 0 or img.max(initial=0) > 65535:
        raise FormatError("PGM values must fit in uint16")
    h, w = img.shape
    payload = img.astype(">u2").tobytes()
    Path(path).write_bytes(f"P5\n{w} {h}\n65535\n".encode("ascii") + payload)


def read_pgm16(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    # Header: magic, width, height, maxval as whitespace-separated tokens,
    # comments (#...) allowed between them.
    pos = 0
    tokens: List[bytes] = []
    while len(tokens) < 4:
        if pos >= len(data):
            raise FormatError("truncated PGM header")
        ch = data[pos:pos + 1]
        if ch == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(data) and not data[end:end + 1].isspace():
                end += 1
            tokens.append(data[pos:end])
            pos = end
    if tokens[0] != b"P5":
        raise FormatError(f"unsupported PGM magic {tokens[0]!r}")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 65535:
        raise FormatError(f"expected 16-bit PGM (maxval 65535), got {maxval}")
    pos += 1  # single whitespace after maxval
    expected = w * h * 2
    body = data[pos:pos + expected]
    if len(body) < expected:
        raise FormatError(f"PGM body truncated: {len(body)} bytes < {expected} expected")
    return np.frombuffer(body, dtype=">u2").reshape(h, w).astype(np.uint16)


# ---------------------------------------------------------------------------
# Mask directory + manifest
# ---------------------------------------------------------------------------

def mask_file_name(view_id: int, level: int) -> str:
    return f"view{view_id:04d}_level{level}.pgm"


def write_mask_dir(
    directory: str | Path,
    entries: List[Tuple[int, int, np.ndarray, Dict[int, int]]],
) -> None:
    """Write label maps plus the manifest.

    `entries` holds (view_id, level, label_map, rows) where rows maps a
    local mask id to its global feature row.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {"version": 1, "entries": []}
    for view_id, level, label_map, rows in entries:
        fname = mask_file_name(view_id, level)
        write_pgm16(directory / fname, label_map)
        manifest["entries"].append(
            {
                "view": int(view_id),
                "level": int(level),
                "file": fname,
                "rows": {str(k): int(v) for k, v in sorted(rows.items())},
            }
        )
    (directory / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1))


def load_mask_manifest(directory: str | Path) -> dict:
    path = Path(directory) / MANIFEST_NAME
    if not path.exists():
        raise FormatError(f"mask manifest not found: {path}")
    manifest = json.loads(path.read_text())
    if manifest.get("version") != 1:
        raise FormatError(f"unsupported mask manifest version {manifest.get('version')!r}")
    return manifest


def list_mask_views(directory: str | Path) -> List[int]:
    manifest = load_mask_manifest(directory)
    return sorted({int(e["view"]) for e in manifest["entries"]})


def load_masks(
    directory: str | Path,
    view_id: int,
    level: int,
    expected_shape: Optional[Tuple[int, int]] = None,
) -> MaskObservation:
    """Load one (view, level) label map with contiguous ids 1..M."""
    directory = Path(directory)
    manifest = load_mask_manifest(directory)
    entry = next(
        (e for e in manifest["entries"] if int(e["view"]) == view_id and int(e["level"]) == level),
        None,
    )
    if entry is None:
        raise FormatError(f"no manifest entry for view {view_id} level {level}")
    label_map = read_pgm16(directory / entry["file"])
    if expected_shape is not None and label_map.shape != tuple(expected_shape):
        raise FormatError(
            f"label map {entry['file']} has shape {label_map.shape}, camera expects {tuple(expected_shape)}"
        )
    rows = {int(k): int(v) for k, v in entry.get("rows", {}).items()}
    original = np.unique(label_map)
    original = original[original > 0]
    orphans = [int(t) for t in original if int(t) not in rows]
    if orphans:
        raise FormatError(f"view {view_id} level {level}: labels without feature rows: {orphans}")
    remapped = np.zeros_like(label_map, dtype=np.uint32)
    feature_row_of: Dict[int, int] = {}
    for new_id, orig in enumerate(original, start=1):
        remapped[label_map == orig] = new_id
        feature_row_of[new_id] = rows[int(orig)]
    obs = MaskObservation(view_id=view_id, level=level, label_map=remapped, feature_row_of=feature_row_of)
    obs.validate()
    return obs


# ---------------------------------------------------------------------------
# Mask feature matrix
# ---------------------------------------------------------------------------

def save_features(features: MaskFeatureMatrix, path: str | Path) -> None:
    header = FEATURE_MAGIC + struct.pack("<III", 1, features.m_total, features.d_sem)
    Path(path).write_bytes(header + features.rows.astype("<f4").tobytes())


def load_features(path: str | Path) -> MaskFeatureMatrix:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != FEATURE_MAGIC:
        raise FormatError("not a feature matrix file (bad magic)")
    version, m_total, d_sem = struct.unpack("<III", data[4:16])
    if version != 1:
        raise FormatError(f"unsupported feature matrix version {version}")
    expected = m_total * d_sem * 4
    body = data[16:]
    if len(body) < expected:
        raise FormatError(f"feature matrix truncated: {len(body)} bytes < {expected} expected")
    rows = np.frombuffer(body[:expected], dtype="<f4").reshape(m_total, d_sem)
    return MaskFeatureMatrix(rows)


# ---------------------------------------------------------------------------
# Cameras
# ---------------------------------------------------------------------------

def save_cameras(cameras: Dict[int, Camera], path: str | Path) -> None:
    payload = {
        "version": 1,
        "cameras": [
            {
                "view_id": vid,
                "fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
                "width": cam.width, "height": cam.height,
                "world_to_camera": cam.world_to_camera.tolist(),
            }
            for vid, cam in sorted(cameras.items())
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=1))


def load_cameras(path: str | Path) -> Dict[int, Camera]:
    payload = json.loads(Path(path).read_text())
    cameras: Dict[int, Camera] = {}
    for entry in payload["cameras"]:
        cameras[int(entry["view_id"])] = Camera(
            fx=float(entry["fx"]), fy=float(entry["fy"]),
            cx=float(entry["cx"]), cy=float(entry["cy"]),
            width=int(entry["width"]), height=int(entry["height"]),
            world_to_camera=np.array(entry["world_to_camera"], dtype=np.float64),
        )
    return cameras


# ---------------------------------------------------------------------------
# Hierarchy file (.shf)
# ---------------------------------------------------------------------------

class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                f"hierarchy file truncated at byte {self.pos} (need {n} more, have {len(self.data) - self.pos})"
            )
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, count: int = 1) -> np.ndarray:
        return np.frombuffer(self.take(4 * count), dtype="<u4").copy()

    def f32(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * count), dtype="<f4").copy()

    def u8(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(count), dtype=np.uint8).copy()


def export_hierarchy(hierarchy, path: str | Path) -> None:
    """Serialize a built hierarchy; see shf_expected_size for the layout."""
    parts: List[bytes] = [HIERARCHY_MAGIC, struct.pack("<I", HIERARCHY_VERSION)]
    flags = 1 if hierarchy.progressive else 0
    n_gp = hierarchy.levels[0].shape[0]
    parts.append(struct.pack("<IIi", flags, n_gp, hierarchy.d_sem))
    counts = [int(a.max()) + 1 if a.size else 0 for a in hierarchy.levels]
    parts.append(np.asarray(counts, dtype="<u4").tobytes())
    for q in range(4):
        parts.append(hierarchy.levels[q].astype("<u4").tobytes())
    for q in (1, 2, 3):
        parts.append(hierarchy.parents[q].astype("<u4").tobytes())
    for q in (1, 2, 3):
        parts.append(hierarchy.semantic_feature[q].astype("<f4").tobytes())
        parts.append(hierarchy.queryable[q].astype(np.uint8).tobytes())
    for q in (1, 2, 3):
        overlap = hierarchy.mask_overlap[q]
        parts.append(struct.pack("<I", overlap.shape[0]))
        parts.append(overlap.astype("<u4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def import_hierarchy(path: str | Path):
    from .hierarchy import SuperpointHierarchy

    r = _Reader(Path(path).read_bytes())
    magic = r.take(4)
    if magic != HIERARCHY_MAGIC:
        raise FormatError(f"not a hierarchy file (magic {magic!r})")
    version = int(r.u32()[0])
    if version != HIERARCHY_VERSION:
        raise FormatError(
            f"hierarchy version mismatch: file has {version}, reader supports {HIERARCHY_VERSION}"
        )
    flags = int(r.u32()[0])
    n_gp = int(r.u32()[0])
    d_sem = int(np.frombuffer(r.take(4), dtype="<i4")[0])
    counts = [int(c) for c in r.u32(4)]
    levels = [r.u32(n_gp) for _ in range(4)]
    parents: Dict[int, np.ndarray] = {}
    for q in (1, 2, 3):
        parents[q] = r.u32(counts[q - 1])
    semantic_feature: Dict[int, np.ndarray] = {}
    queryable: Dict[int, np.ndarray] = {}
    for q in (1, 2, 3):
        semantic_feature[q] = r.f32(counts[q] * d_sem).reshape(counts[q], d_sem)
        queryable[q] = r.u8(counts[q]).astype(bool)
    mask_overlap: Dict[int, np.ndarray] = {}
    for q in (1, 2, 3):
        nnz = int(r.u32()[0])
        mask_overlap[q] = r.u32(nnz * 3).reshape(nnz, 3)
    return SuperpointHierarchy(
        levels=levels,
        parents=parents,
        semantic_feature=semantic_feature,
        queryable=queryable,
        mask_overlap=mask_overlap,
        d_sem=d_sem,
        progressive=bool(flags & 1),
    )


def shf_expected_size(hierarchy) -> int:
    """Exact byte size of export_hierarchy output (documented format bound)."""
    n_gp = hierarchy.levels[0].shape[0]
    counts = [int(a.max()) + 1 if a.size else 0 for a in hierarchy.levels]
    size = 4 + 4 + 4 + 4 + 4 + 16  # magic, version, flags, n_gp, d_sem, counts
    size += 4 * n_gp * 4  # level assignments
    size += 4 * (counts[0] + counts[1] + counts[2])  # parent maps
    size += sum(4 * hierarchy.d_sem * counts[q] + counts[q] for q in (1, 2, 3))
    size += sum(4 + 12 * hierarchy.mask_overlap[q].shape[0] for q in (1, 2, 3))
    return size
