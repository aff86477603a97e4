"""Hierarchical superpoint merging and per-superpoint semantic features.

Level 0 comes from the partition solver; levels 1..3 merge adjacent
superpoints whose mask-occupancy histograms agree across views, guided by
the matching mask granularity. Semantic features are visibility-weighted
averages of mask features.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .labels import GpLabeling
from .types import MaskFeatureMatrix, MaskObservation, ValidationError

DEFAULT_TAU = 0.9
DEFAULT_MIN_VISIBLE_FRACTION = 0.05
FEATURE_NORM_TOL = 1e-4


@dataclass
class SuperpointHierarchy:
    """Nested assignments S0..S3 with per-superpoint semantic features."""

    levels: List[np.ndarray]                 # 4 arrays of per-gp superpoint ids
    parents: Dict[int, np.ndarray]           # q -> map level-(q-1) id -> level-q id
    semantic_feature: Dict[int, np.ndarray]  # q in {1,2,3} -> (n_q, D) unit rows
    queryable: Dict[int, np.ndarray]         # q -> bool per superpoint
    mask_overlap: Dict[int, np.ndarray]      # q -> (nnz, 3) [sp, global row, count]
    d_sem: int
    progressive: bool = True

    @property
    def n_gp(self) -> int:
        return self.levels[0].shape[0]

    def count(self, level: int) -> int:
        arr = self.levels[level]
        return int(arr.max()) + 1 if arr.size else 0

    def members(self, level: int, sp_id: int) -> np.ndarray:
        return np.nonzero(self.levels[level] == sp_id)[0]

    def ancestor_chain(self, level: int, sp_id: int) -> Dict[int, int]:
        """Superpoint ids from `level` up to level 3 along parent maps."""
        chain = {level: int(sp_id)}
        current = int(sp_id)
        for q in range(level + 1, 4):
            current = int(self.parents[q][current])
            chain[q] = current
        return chain

    def validate(self) -> None:
        n = self.n_gp
        for q, arr in enumerate(self.levels):
            if arr.shape != (n,):
                raise ValidationError(f"level {q} assignment has wrong shape")
            count = self.count(q)
            if np.unique(arr).size != count:
                raise ValidationError(f"level {q} superpoint ids not contiguous")
        for q in (1, 2, 3):
            if self.parents[q].shape[0] != self.count(q - 1):
                raise ValidationError(f"parent map into level {q} is not total")
            if self.progressive and not np.array_equal(
                self.parents[q][self.levels[q - 1]], self.levels[q]
            ):
                raise ValidationError(f"nesting violated between levels {q - 1} and {q}")
            feats = self.semantic_feature[q]
            if feats.shape != (self.count(q), self.d_sem):
                raise ValidationError(f"level {q} features have wrong shape")
            norms = np.linalg.norm(feats.astype(np.float64), axis=1)
            ok = np.where(self.queryable[q], np.abs(norms - 1.0) <= FEATURE_NORM_TOL, norms == 0.0)
            if not ok.all():
                raise ValidationError(f"level {q} semantic features violate norm contract")


def histograms(
    assignment: np.ndarray,
    labeling: GpLabeling,
    n_superpoints: int,
    mask_count: int,
) -> np.ndarray:
    """Per-superpoint counts over mask labels for one view, shape (S, M+1).

    Column t holds the number of member primitives visible in the view
    with label t; column 0 is unused (unseen primitives are excluded).
    """
    hist = np.zeros((n_superpoints, mask_count + 1), dtype=np.float64)
    seen = labeling.label > 0
    if np.any(seen):
        flat = assignment[seen].astype(np.int64) * (mask_count + 1) + labeling.label[seen]
        counts = np.bincount(flat, minlength=n_superpoints * (mask_count + 1))
        hist = counts.reshape(n_superpoints, mask_count + 1).astype(np.float64)
    return hist


def affinity(h_u: np.ndarray, h_v: np.ndarray) -> float:
    """Cosine similarity of two single-view histograms (0 when either is empty)."""
    nu = np.linalg.norm(h_u)
    nv = np.linalg.norm(h_v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(h_u, h_v) / (nu * nv))


def multiview_affinity(
    hists_u: Sequence[np.ndarray],
    hists_v: Sequence[np.ndarray],
    counted: Sequence[bool],
) -> float:
    """Mean per-view cosine over counted views; 0 when no view counts."""
    scores = [
        affinity(hu, hv)
        for hu, hv, ok in zip(hists_u, hists_v, counted)
        if ok and np.linalg.norm(hu) > 0 and np.linalg.norm(hv) > 0
    ]
    if not scores:
        return 0.0
    return float(np.mean(scores))


class _MergeState:
    """Cluster bookkeeping for one agglomeration level."""

    def __init__(
        self,
        n_clusters: int,
        view_hists: List[np.ndarray],
        member_count: np.ndarray,
        adjacency: set,
        min_visible_fraction: float,
    ):
        self.hists = [h.copy() for h in view_hists]  # per view: (S, M+1)
        self.member_count = member_count.astype(np.int64).copy()
        self.neighbors: List[set] = [set() for _ in range(n_clusters)]
        for a, b in adjacency:
            self.neighbors[a].add(b)
            self.neighbors[b].add(a)
        self.alive = np.ones(n_clusters, dtype=bool)
        self.version = np.zeros(n_clusters, dtype=np.int64)
        self.min_visible_fraction = min_visible_fraction
        self.vis_count = [h.sum(axis=1) for h in self.hists]

    def pair_affinity(self, a: int, b: int) -> float:
        scores = []
        for v in range(len(self.hists)):
            vis_a = self.vis_count[v][a]
            vis_b = self.vis_count[v][b]
            if vis_a < self.min_visible_fraction * self.member_count[a]:
                continue
            if vis_b < self.min_visible_fraction * self.member_count[b]:
                continue
            if vis_a == 0 or vis_b == 0:
                continue
            scores.append(affinity(self.hists[v][a], self.hists[v][b]))
        return float(np.mean(scores)) if scores else 0.0

    def merge(self, a: int, b: int) -> int:
        """Merge b into a (a < b); histograms add, adjacency unions."""
        for v in range(len(self.hists)):
            self.hists[v][a] += self.hists[v][b]
            self.vis_count[v][a] += self.vis_count[v][b]
        self.member_count[a] += self.member_count[b]
        self.alive[b] = False
        self.version[a] += 1
        self.neighbors[a].discard(b)
        for nb in self.neighbors[b]:
            if nb != a:
                self.neighbors[a].add(nb)
                self.neighbors[nb].discard(b)
                self.neighbors[nb].add(a)
        self.neighbors[b] = set()
        return a


def merge_level(
    assignment: np.ndarray,
    graph_edges: np.ndarray,
    labelings: Sequence[GpLabeling],
    mask_counts: Sequence[int],
    tau: float,
    min_visible_fraction: float = DEFAULT_MIN_VISIBLE_FRACTION,
) -> np.ndarray:
    """One agglomeration pass; returns the parent map (S_prev -> S_new).

    Repeatedly merges the adjacent cluster pair with the highest mean
    histogram affinity above tau; merged histograms are sums. Ties pick
    the lexicographically lowest pair.
    """
    if not 0.0 <= tau <= 1.0:
        raise ValidationError(f"merge threshold must be in [0, 1], got {tau}")
    n_prev = int(assignment.max(initial=-1)) + 1
    view_hists = [
        histograms(assignment, lb, n_prev, m) for lb, m in zip(labelings, mask_counts)
    ]
    member_count = np.bincount(assignment, minlength=n_prev)
    su = assignment[graph_edges[:, 0]]
    sv = assignment[graph_edges[:, 1]]
    diff = su != sv
    adjacency = {
        (int(min(a, b)), int(max(a, b))) for a, b in zip(su[diff], sv[diff])
    }
    state = _MergeState(n_prev, view_hists, member_count, adjacency, min_visible_fraction)

    heap: List[Tuple[float, int, int, int, int]] = []
    for a, b in sorted(adjacency):
        score = state.pair_affinity(a, b)
        if score > tau:
            heapq.heappush(heap, (-score, a, b, 0, 0))

    parent_of = np.arange(n_prev, dtype=np.int64)  # union-find with path compression

    def find(x: int) -> int:
        while parent_of[x] != x:
            parent_of[x] = parent_of[parent_of[x]]
            x = int(parent_of[x])
        return x

    while heap:
        neg, a, b, va, vb = heapq.heappop(heap)
        if not (state.alive[a] and state.alive[b]):
            continue
        if state.version[a] != va or state.version[b] != vb:
            continue
        score = -neg
        if score <= tau:
            continue
        keep = state.merge(a, b)
        parent_of[b] = a
        for nb in sorted(state.neighbors[keep]):
            s = state.pair_affinity(keep, nb)
            if s > tau:
                lo, hi = (keep, nb) if keep < nb else (nb, keep)
                heapq.heappush(heap, (-s, lo, hi, int(state.version[lo]), int(state.version[hi])))

    roots = np.array([find(i) for i in range(n_prev)], dtype=np.int64)
    # Contiguous new ids ordered by smallest previous-level member id.
    uniq, first = np.unique(roots, return_index=True)
    rank = np.empty(uniq.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(uniq.size)
    lookup = {int(u): int(rank[i]) for i, u in enumerate(uniq)}
    return np.array([lookup[int(r)] for r in roots], dtype=np.int64)


def assign_features(
    assignment: np.ndarray,
    labelings: Sequence[GpLabeling],
    observations: Sequence[MaskObservation],
    features: MaskFeatureMatrix,
    n_superpoints: int,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Semantic features per superpoint from mask features.

    Per view, a superpoint's feature is the mask-feature average weighted
    by the fraction of its members visible in each mask; views are then
    combined weighted by visible-member count and the result normalized.
    Returns (features, queryable mask, overlap triples).
    """
    d = features.d_sem
    accum = np.zeros((n_superpoints, d), dtype=np.float64)
    overlap_keys: List[np.ndarray] = []
    overlap_vals: List[np.ndarray] = []
    member_count = np.bincount(assignment, minlength=n_superpoints).astype(np.float64)
    for labeling, obs in zip(labelings, observations):
        m = int(obs.label_map.max(initial=0))
        hist = histograms(assignment, labeling, n_superpoints, m)
        if m == 0:
            continue
        rows = np.array([obs.feature_row_of[t] for t in range(1, m + 1)], dtype=np.int64)
        if rows.size and rows.max() >= features.m_total:
            raise ValidationError(
                f"view {obs.view_id} level {obs.level} references feature row {int(rows.max())} "
                f"outside matrix of {features.m_total} rows"
            )
        fview = features.rows[rows].astype(np.float64)  # (M, D)
        omega = hist[:, 1:] / member_count[:, None]
        per_view = omega @ fview
        vis = hist[:, 1:].sum(axis=1)
        accum += vis[:, None] * per_view
        sp_idx, t_idx = np.nonzero(hist[:, 1:])
        overlap_keys.append(sp_idx.astype(np.int64) * features.m_total + rows[t_idx])
        overlap_vals.append(hist[sp_idx, t_idx + 1])

    norms = np.linalg.norm(accum, axis=1)
    queryable = norms > 0
    out = np.zeros((n_superpoints, d), dtype=np.float32)
    out[queryable] = (accum[queryable] / norms[queryable, None]).astype(np.float32)
    if overlap_keys:
        keys = np.concatenate(overlap_keys)
        vals = np.concatenate(overlap_vals)
        uniq, inverse = np.unique(keys, return_inverse=True)
        sums = np.bincount(inverse, weights=vals)
        triples = np.stack(
            [uniq // features.m_total, uniq % features.m_total, sums.astype(np.int64)], axis=1
        ).astype(np.uint32)
    else:
        triples = np.zeros((0, 3), dtype=np.uint32)
    return out, queryable, triples


def _majority_parent(prev: np.ndarray, target: np.ndarray, n_prev: int) -> np.ndarray:
    """Most frequent target id among each prev superpoint's members (ties: lower)."""
    parent = np.zeros(n_prev, dtype=np.int64)
    n_target = int(target.max(initial=-1)) + 1
    flat = prev.astype(np.int64) * n_target + target
    counts = np.bincount(flat, minlength=n_prev * n_target).reshape(n_prev, n_target)
    parent = np.argmax(counts, axis=1)
    return parent


def build_hierarchy(
    s0_assignment: np.ndarray,
    graph_edges: np.ndarray,
    labelings_by_level: Dict[int, List[GpLabeling]],
    observations_by_level: Dict[int, List[MaskObservation]],
    features: MaskFeatureMatrix,
    tau: Dict[int, float],
    min_visible_fraction: float = DEFAULT_MIN_VISIBLE_FRACTION,
    mode: str = "progressive",
) -> SuperpointHierarchy:
    """Assemble the 3-level hierarchy on top of a level-0 partition.

    mode: "progressive" (each level builds on the previous), "independent"
    (every level merged directly from S0), or "instance_only" (a single
    object-level merge copied to all levels).
    """
    if mode not in ("progressive", "independent", "instance_only"):
        raise ValidationError(f"unknown hierarchy mode {mode!r}")
    s0 = np.asarray(s0_assignment, dtype=np.int64)
    levels = [s0]
    parents: Dict[int, np.ndarray] = {}

    def counts_for(level: int) -> List[int]:
        return [int(o.label_map.max(initial=0)) for o in observations_by_level[level]]

    if mode == "progressive":
        for q in (1, 2, 3):
            parent = merge_level(
                levels[q - 1],
                graph_edges,
                labelings_by_level[q],
                counts_for(q),
                tau[q],
                min_visible_fraction,
            )
            parents[q] = parent
            levels.append(parent[levels[q - 1]])
    elif mode == "independent":
        for q in (1, 2, 3):
            parent_from_s0 = merge_level(
                s0,
                graph_edges,
                labelings_by_level[q],
                counts_for(q),
                tau[q],
                min_visible_fraction,
            )
            levels.append(parent_from_s0[s0])
        for q in (1, 2, 3):
            parents[q] = _majority_parent(
                levels[q - 1], levels[q], int(levels[q - 1].max(initial=-1)) + 1
            )
    else:  # instance_only
        parent3 = merge_level(
            s0,
            graph_edges,
            labelings_by_level[3],
            counts_for(3),
            tau[3],
            min_visible_fraction,
        )
        s3 = parent3[s0]
        levels.extend([s3, s3, s3])
        parents[1] = parent3
        parents[2] = np.arange(int(s3.max(initial=-1)) + 1, dtype=np.int64)
        parents[3] = parents[2].copy()

    semantic_feature: Dict[int, np.ndarray] = {}
    queryable: Dict[int, np.ndarray] = {}
    mask_overlap: Dict[int, np.ndarray] = {}
    for q in (1, 2, 3):
        source_level = 3 if mode == "instance_only" else q
        feats, able, triples = assign_features(
            levels[q],
            labelings_by_level[source_level],
            observations_by_level[source_level],
            features,
            int(levels[q].max(initial=-1)) + 1,
        )
        semantic_feature[q] = feats
        queryable[q] = able
        mask_overlap[q] = triples

    return SuperpointHierarchy(
        levels=[lv.astype(np.uint32) for lv in levels],
        parents={q: parents[q].astype(np.uint32) for q in (1, 2, 3)},
        semantic_feature=semantic_feature,
        queryable=queryable,
        mask_overlap=mask_overlap,
        d_sem=features.d_sem,
        progressive=(mode == "progressive"),
    )
