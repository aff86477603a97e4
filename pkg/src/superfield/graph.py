"""KNN adjacency graph over primitive centroids with feature-distance weights.

The neighbor search is exact (kd-tree accelerated, brute-force equal by
construction); ties at the k-th distance resolve to lower indices.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .types import FormatError, GaussianScene, ValidationError

GRAPH_MAGIC = b"SGRF"

DEFAULT_CHANNEL_SCALES = {"position": 1.0, "color": 0.5, "normal": 0.5}


@dataclass
class AdjacencyGraph:
    node_count: int
    edges: np.ndarray                       # (E, 2) int32, i < j, lexicographically sorted
    weight: Optional[np.ndarray] = None     # (E,) float64 in (0, 1] before reweighting
    node_feature: Optional[np.ndarray] = None  # (n, d) float64

    def validate(self) -> None:
        if self.edges.size:
            if np.any(self.edges[:, 0] >= self.edges[:, 1]):
                raise ValidationError("edge list contains a self-loop or unordered pair")
            enc = self.edges[:, 0].astype(np.int64) * self.node_count + self.edges[:, 1]
            if np.unique(enc).size != enc.size:
                raise ValidationError("duplicate edges")
        if self.weight is not None:
            if np.any(self.weight <= 0):
                raise ValidationError("non-positive edge weight")

    def edge_set(self) -> set:
        return {(int(u), int(v)) for u, v in self.edges}


def _knn_one(points: np.ndarray, tree: cKDTree, i: int, k: int) -> np.ndarray:
    """Slow path for one query point: exact k nearest with (distance, index) order."""
    n = points.shape[0]
    k_query = min(n, k + 2)
    while True:
        dist, idx = tree.query(points[i], k=k_query)
        dist, idx = np.atleast_1d(dist), np.atleast_1d(idx)
        mask = idx != i
        cand_d, cand_i = dist[mask], idx[mask]
        order = np.lexsort((cand_i, cand_d))
        cand_d, cand_i = cand_d[order], cand_i[order]
        if k_query == n or (cand_d.size > k and cand_d[k] > cand_d[k - 1]):
            return cand_i[:k]
        k_query = min(n, k_query * 2)


def build_knn(points: np.ndarray, k: int) -> AdjacencyGraph:
    """Symmetrized exact Euclidean KNN graph; k is capped at n - 1."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    n = points.shape[0]
    if n < 2:
        raise ValidationError(f"KNN graph needs at least 2 points, got {n}")
    if k < 1:
        raise ValidationError(f"K must be >= 1, got {k}")
    k_eff = min(k, n - 1)

    tree = cKDTree(points)
    k_query = min(n, k_eff + 2)
    dist, idx = tree.query(points, k=k_query)

    rows = np.arange(n)
    self_mask = idx == rows[:, None]
    self_found = self_mask.sum(axis=1) == 1
    # Candidate slots after self removal; rows whose k-th and (k+1)-th
    # non-self distances coincide need tie resolution.
    neighbor_idx = np.empty((n, k_eff), dtype=np.int64)
    ambiguous = np.zeros(n, dtype=bool)
    for i in range(n):
        if not self_found[i]:
            ambiguous[i] = True
            continue
        mask = ~self_mask[i]
        cand_d = dist[i][mask]
        cand_i = idx[i][mask]
        order = np.lexsort((cand_i, cand_d))
        cand_d, cand_i = cand_d[order], cand_i[order]
        if k_query < n and not (cand_d.size > k_eff and cand_d[k_eff] > cand_d[k_eff - 1]):
            ambiguous[i] = True
            continue
        neighbor_idx[i] = cand_i[:k_eff]
    for i in np.nonzero(ambiguous)[0]:
        neighbor_idx[i] = _knn_one(points, tree, int(i), k_eff)

    u = np.repeat(rows, k_eff)
    v = neighbor_idx.ravel()
    lo = np.minimum(u, v)
    hi = np.maximum(u, v)
    enc = lo.astype(np.int64) * n + hi
    enc = np.unique(enc)
    edges = np.stack([enc // n, enc % n], axis=1).astype(np.int32)
    return AdjacencyGraph(node_count=n, edges=edges)


def node_features(
    scene: GaussianScene,
    channels: Sequence[str] = ("position", "color", "normal"),
    scales: Optional[Dict[str, float]] = None,
) -> np.ndarray:
    """Per-node feature vectors: scaled concatenation of selected channels."""
    if not channels:
        raise ValidationError("node feature channel set must not be empty")
    scales = dict(DEFAULT_CHANNEL_SCALES, **(scales or {}))
    blocks = []
    source = {
        "position": scene.centroid,
        "color": scene.color,
        "normal": scene.normal,
    }
    for name in channels:
        if name not in source:
            raise ValidationError(f"unknown feature channel {name!r}")
        blocks.append(source[name].astype(np.float64) * scales[name])
    return np.concatenate(blocks, axis=1)


def compute_weights(graph: AdjacencyGraph) -> AdjacencyGraph:
    """Inverse normalized feature-distance weights on every edge."""
    if graph.node_feature is None:
        raise ValidationError("node features must be set before weighting")
    if graph.edges.shape[0] == 0:
        raise ValidationError("graph has no edges")
    p = graph.node_feature
    diff = p[graph.edges[:, 0]] - p[graph.edges[:, 1]]
    d = np.linalg.norm(diff, axis=1)
    mean = d.mean()
    if mean == 0.0:
        graph.weight = np.ones_like(d)
    else:
        graph.weight = 1.0 / (1.0 + d / mean)
    return graph


def save_graph(graph: AdjacencyGraph, path: str | Path) -> None:
    if graph.weight is None or graph.node_feature is None:
        raise ValidationError("only weighted feature graphs can be serialized")
    n_edges = graph.edges.shape[0]
    feat = graph.node_feature.astype("<f4")
    header = GRAPH_MAGIC + struct.pack(
        "<IIQI", 1, graph.node_count, n_edges, feat.shape[1]
    )
    triples = np.empty(n_edges, dtype=[("u", "<u4"), ("v", "<u4"), ("w", "<f4")])
    triples["u"] = graph.edges[:, 0]
    triples["v"] = graph.edges[:, 1]
    triples["w"] = graph.weight
    Path(path).write_bytes(header + feat.tobytes() + triples.tobytes())


def load_graph(path: str | Path) -> AdjacencyGraph:
    data = Path(path).read_bytes()
    if len(data) < 24 or data[:4] != GRAPH_MAGIC:
        raise FormatError("not a graph file (bad magic)")
    version, n_nodes, n_edges, feat_dim = struct.unpack("<IIQI", data[4:24])
    if version != 1:
        raise FormatError(f"unsupported graph file version {version}")
    pos = 24
    feat_bytes = n_nodes * feat_dim * 4
    edge_bytes = n_edges * 12
    if len(data) < pos + feat_bytes + edge_bytes:
        raise FormatError("graph file truncated")
    feat = np.frombuffer(data[pos:pos + feat_bytes], dtype="<f4").reshape(n_nodes, feat_dim)
    pos += feat_bytes
    triples = np.frombuffer(
        data[pos:pos + edge_bytes], dtype=[("u", "<u4"), ("v", "<u4"), ("w", "<f4")]
    )
    edges = np.stack([triples["u"], triples["v"]], axis=1).astype(np.int32)
    return AdjacencyGraph(
        node_count=n_nodes,
        edges=edges,
        weight=triples["w"].astype(np.float64),
        node_feature=feat.astype(np.float64),
    )


def build_weighted_graph(
    scene: GaussianScene,
    k: int,
    channels: Sequence[str] = ("position", "color", "normal"),
    scales: Optional[Dict[str, float]] = None,
) -> AdjacencyGraph:
    graph = build_knn(scene.centroid.astype(np.float64), k)
    graph.node_feature = node_features(scene, channels, scales)
    return compute_weights(graph)
