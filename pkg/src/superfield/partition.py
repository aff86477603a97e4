"""Contrastive edge reweighting and cut-pursuit minimal partition.

The solver greedily alternates binary graph-cut splits (exact max-flow
per component) with value refits, then merges adjacent components whose
union does not raise the objective. Energy is quadratic fidelity plus a
weighted Potts penalty on edges between different components.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .graph import AdjacencyGraph
from .labels import GpLabeling
from .types import FormatError, ValidationError

PARTITION_MAGIC = b"SPRT"

DEFAULT_LAMBDA = 0.5
DEFAULT_DELTA_PLUS = 0.5
DEFAULT_DELTA_MINUS = 0.5
DEFAULT_CLAMP = 1e-3
DEFAULT_MAX_ITERATIONS = 10
_MAX_INNER = 6
_MULTI_INIT_LIMIT = 64  # components up to this size try extra split seeds


@dataclass
class Partition:
    assignment: np.ndarray         # (n,) int32, contiguous superpoint ids
    superpoint_value: np.ndarray   # (S, d) mean feature per superpoint
    energy: float
    energy_trace: List[float] = field(default_factory=list)

    @property
    def superpoint_count(self) -> int:
        return self.superpoint_value.shape[0]


def depth_decay(mean_depth: np.ndarray, d0: float) -> np.ndarray:
    """Smooth monotone attenuation of mask influence with distance."""
    if d0 <= 0:
        return np.ones_like(mean_depth)
    return np.exp(-mean_depth / d0)


def reweight(
    graph: AdjacencyGraph,
    labelings: Sequence[GpLabeling],
    delta_plus: float = DEFAULT_DELTA_PLUS,
    delta_minus: float = DEFAULT_DELTA_MINUS,
    clamp: float = DEFAULT_CLAMP,
    use_decay: bool = True,
    d0_factor: float = 2.0,
) -> AdjacencyGraph:
    """Contrastive mask-guided edge reweighting, accumulated over views.

    Edges whose endpoints share a mask label gain delta_plus, split labels
    lose delta_minus, both scaled by a depth decay; edges with an unseen
    endpoint are untouched for that view. Weights are clamped positive at
    the end.
    """
    if delta_plus < 0 or delta_minus < 0:
        raise ValidationError("delta_plus and delta_minus must be non-negative")
    if graph.weight is None:
        raise ValidationError("graph must be weighted before reweighting")
    w = graph.weight.astype(np.float64).copy()
    u = graph.edges[:, 0]
    v = graph.edges[:, 1]
    for labeling in sorted(labelings, key=lambda lb: lb.view_id):
        seen = labeling.label > 0
        both = seen[u] & seen[v]
        both &= np.isfinite(labeling.depth[u]) & np.isfinite(labeling.depth[v])
        if not np.any(both):
            continue
        same = labeling.label[u[both]] == labeling.label[v[both]]
        if use_decay:
            vis_depth = labeling.depth[seen]
            vis_depth = vis_depth[np.isfinite(vis_depth)]
            d0 = d0_factor * float(np.median(vis_depth)) if vis_depth.size else 0.0
            dbar = 0.5 * (labeling.depth[u[both]] + labeling.depth[v[both]])
            scale = depth_decay(dbar, d0)
        else:
            scale = np.ones(int(both.sum()))
        w[both] += scale * np.where(same, delta_plus, -delta_minus)
    graph.weight = np.maximum(w, clamp)
    return graph


# ---------------------------------------------------------------------------
# Cut pursuit
# ---------------------------------------------------------------------------

def _fidelity(p: np.ndarray) -> float:
    """Sum of squared distances of rows to their mean."""
    if p.shape[0] == 0:
        return 0.0
    mean = p.mean(axis=0)
    return float(np.sum(p * p) - p.shape[0] * np.dot(mean, mean))


def _connected_labels(n: int, edges: np.ndarray) -> np.ndarray:
    """Connected components, labeled by first node occurrence (deterministic)."""
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    if edges.shape[0] == 0:
        return np.arange(n, dtype=np.int64)
    adj = coo_matrix(
        (np.ones(edges.shape[0]), (edges[:, 0], edges[:, 1])), shape=(n, n)
    )
    _, raw = connected_components(adj, directed=False)
    _, first = np.unique(raw, return_index=True)
    remap = np.empty(first.size, dtype=np.int64)
    remap[np.argsort(first, kind="stable")] = np.arange(first.size)
    return remap[raw]


def _group_fidelity(p: np.ndarray, inv: np.ndarray, n_groups: int) -> np.ndarray:
    """Per-group sum of squared distances to the group mean."""
    counts = np.bincount(inv, minlength=n_groups).astype(np.float64)
    sq = np.bincount(inv, weights=np.sum(p * p, axis=1), minlength=n_groups)
    sums = np.zeros((n_groups, p.shape[1]))
    for d in range(p.shape[1]):
        sums[:, d] = np.bincount(inv, weights=p[:, d], minlength=n_groups)
    with np.errstate(invalid="ignore", divide="ignore"):
        fid = sq - np.einsum("gd,gd->g", sums, sums) / np.maximum(counts, 1.0)
    return np.maximum(fid, 0.0)


def _split_component(
    p: np.ndarray,
    edges: np.ndarray,
    weights: np.ndarray,
    lam: float,
    multi_init: bool,
) -> Optional[np.ndarray]:
    """Best binary labeling of one component, or None when constant.

    Alternates an exact min-cut (given two centers) with center refits.
    """
    m = p.shape[0]
    mean = p.mean(axis=0)
    dist_mean = np.linalg.norm(p - mean, axis=1)
    if dist_mean.max() == 0.0:
        return None

    i1 = int(np.argmax(dist_mean))
    i0 = int(np.argmax(np.linalg.norm(p - p[i1], axis=1)))
    inits: List[Tuple[np.ndarray, np.ndarray]] = [(p[i0].copy(), p[i1].copy())]
    if multi_init:
        # Principal-direction seeds help escape poor farthest-pair starts.
        centered = p - mean
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        direction = vt[0]
        spread = centered @ direction
        scale = spread.std()
        if scale > 0:
            inits.append((mean - scale * direction, mean + scale * direction))
        lo = int(np.argmin(spread))
        hi = int(np.argmax(spread))
        if lo != hi:
            inits.append((p[lo].copy(), p[hi].copy()))

    eu = np.ascontiguousarray(edges[:, 0].astype(np.int32))
    ev = np.ascontiguousarray(edges[:, 1].astype(np.int32))
    cap = np.ascontiguousarray(lam * weights)

    best_energy = _fidelity(p)
    best_labels: Optional[np.ndarray] = None
    for h0, h1 in inits:
        labels_prev: Optional[np.ndarray] = None
        for _ in range(_MAX_INNER):
            unary0 = np.sum((p - h0) ** 2, axis=1)
            unary1 = np.sum((p - h1) ** 2, axis=1)
            _, side = _kernels.min_cut(
                m,
                np.ascontiguousarray(unary1),
                np.ascontiguousarray(unary0),
                eu,
                ev,
                cap,
            )
            labels = 1 - side.astype(np.int64)  # source side keeps label 0
            if labels.min() == labels.max():
                break
            if labels_prev is not None and np.array_equal(labels, labels_prev):
                break
            labels_prev = labels
            h0 = p[labels == 0].mean(axis=0)
            h1 = p[labels == 1].mean(axis=0)
        if labels_prev is None:
            continue
        labels = labels_prev
        cut = float(np.sum(weights[labels[edges[:, 0]] != labels[edges[:, 1]]])) if edges.size else 0.0
        energy = _fidelity(p[labels == 0]) + _fidelity(p[labels == 1]) + lam * cut
        if energy < best_energy:
            best_energy = energy
            best_labels = labels
    return best_labels


def _total_energy(p: np.ndarray, edges: np.ndarray, weights: np.ndarray, lam: float, comp: np.ndarray) -> float:
    _, inv = np.unique(comp, return_inverse=True)
    total = float(np.sum(_group_fidelity(p, inv, int(inv.max()) + 1)))
    if edges.size:
        cut = comp[edges[:, 0]] != comp[edges[:, 1]]
        total += lam * float(np.sum(weights[cut]))
    return total


def _exact_small_partition(
    p: np.ndarray, edges: np.ndarray, weights: np.ndarray, lam: float
) -> Optional[np.ndarray]:
    """Exact optimum over connected partitions by branch and bound.

    Enumerates restricted-growth assignments with a monotone partial
    energy bound; only viable for tiny graphs (n <= _EXACT_LIMIT).
    """
    n = p.shape[0]
    adjacency: List[List[int]] = [[] for _ in range(n)]
    edge_w: Dict[Tuple[int, int], float] = {}
    for e, (i, j) in enumerate(edges):
        adjacency[int(i)].append(int(j))
        adjacency[int(j)].append(int(i))
        edge_w[(int(i), int(j))] = edge_w.get((int(i), int(j)), 0.0) + float(weights[e])

    best_energy = np.inf
    best_assign: Optional[np.ndarray] = None
    assign = np.full(n, -1, dtype=np.int64)
    block_count = np.zeros(n)
    block_sum = np.zeros((n, p.shape[1]))
    block_sq = np.zeros(n)

    def block_fid(b: int) -> float:
        if block_count[b] == 0:
            return 0.0
        s = block_sum[b]
        return block_sq[b] - float(np.dot(s, s)) / block_count[b]

    def backtrack(i: int, n_blocks: int, partial: float) -> None:
        nonlocal best_energy, best_assign
        if partial >= best_energy:
            return
        if i == n:
            # Connectivity check per block.
            for b in range(n_blocks):
                members = np.nonzero(assign == b)[0]
                seen = {int(members[0])}
                stack = [int(members[0])]
                member_set = set(int(x) for x in members)
                while stack:
                    u = stack.pop()
                    for v in adjacency[u]:
                        if v in member_set and v not in seen:
                            seen.add(v)
                            stack.append(v)
                if len(seen) != members.size:
                    return
            best_energy = partial
            best_assign = assign.copy()
            return
        pv = p[i]
        pv_sq = float(np.dot(pv, pv))
        for b in range(min(i, n_blocks) + 1):
            opening = b == n_blocks
            fid_before = block_fid(b)
            assign[i] = b
            block_count[b] += 1
            block_sum[b] += pv
            block_sq[b] += pv_sq
            delta = block_fid(b) - fid_before
            for (u, v), w in edge_w.items():
                if v == i and assign[u] != b:
                    delta += lam * w
            backtrack(i + 1, n_blocks + (1 if opening else 0), partial + delta)
            assign[i] = -1
            block_count[b] -= 1
            block_sum[b] -= pv
            block_sq[b] -= pv_sq

    backtrack(0, 0, 0.0)
    return best_assign


_EXACT_LIMIT = 10


def cut_pursuit(
    graph: AdjacencyGraph,
    lam: float = DEFAULT_LAMBDA,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
) -> Partition:
    """Piecewise-constant graph partition via iterated binary cuts.

    Energy: sum_i ||x_i - p_i||^2 + lam * sum_edges w_ij [comp_i != comp_j],
    nonincreasing across iterations (asserted via the returned trace).
    """
    if lam < 0:
        raise ValidationError(f"lambda must be >= 0, got {lam}")
    if graph.node_feature is None or graph.weight is None:
        raise ValidationError("cut_pursuit needs node features and edge weights")
    p = np.asarray(graph.node_feature, dtype=np.float64)
    edges = graph.edges.astype(np.int64)
    weights = np.asarray(graph.weight, dtype=np.float64)
    n = p.shape[0]

    comp = _connected_labels(n, edges)
    baseline = float(np.sum(p * p)) + lam * float(np.sum(weights)) + 1.0
    tol = 1e-12 * baseline
    trace = [_total_energy(p, edges, weights, lam, comp)]

    next_id = int(comp.max()) + 1
    local = np.empty(n, dtype=np.int64)
    for _ in range(max_iterations):
        changed = False
        # Group members and internal edges by component once per sweep.
        uniq, inv = np.unique(comp, return_inverse=True)
        order = np.argsort(inv, kind="stable")
        counts = np.bincount(inv, minlength=uniq.size)
        starts = np.concatenate([[0], np.cumsum(counts)])
        eu_inv = inv[edges[:, 0]] if edges.size else np.zeros(0, dtype=np.int64)
        ev_inv = inv[edges[:, 1]] if edges.size else np.zeros(0, dtype=np.int64)
        internal = np.nonzero(eu_inv == ev_inv)[0]
        eorder = internal[np.argsort(eu_inv[internal], kind="stable")]
        ecounts = np.bincount(eu_inv[internal], minlength=uniq.size)
        estarts = np.concatenate([[0], np.cumsum(ecounts)])

        for ci in range(uniq.size):
            members = order[starts[ci]:starts[ci + 1]]
            if members.size < 2:
                continue
            eidx = eorder[estarts[ci]:estarts[ci + 1]]
            local[members] = np.arange(members.size)
            sub_edges = local[edges[eidx]]
            sub_w = weights[eidx]
            labels = _split_component(
                p[members], sub_edges, sub_w, lam, multi_init=members.size <= _MULTI_INIT_LIMIT
            )
            if labels is None:
                continue
            old_fid = _fidelity(p[members])
            # Connected pieces of each side become their own components.
            piece = np.full(members.size, -1, dtype=np.int64)
            offset = 0
            for b in (0, 1):
                side_nodes = np.nonzero(labels == b)[0]
                if side_nodes.size == 0:
                    continue
                side_local = np.full(members.size, -1, dtype=np.int64)
                side_local[side_nodes] = np.arange(side_nodes.size)
                if sub_edges.size:
                    side_mask = (labels[sub_edges[:, 0]] == b) & (labels[sub_edges[:, 1]] == b)
                    side_edges = side_local[sub_edges[side_mask]]
                else:
                    side_edges = np.zeros((0, 2), dtype=np.int64)
                comp_b = _connected_labels(side_nodes.size, side_edges)
                piece[side_nodes] = comp_b + offset
                offset += int(comp_b.max()) + 1
            if offset < 2:
                continue
            new_fid = float(np.sum(_group_fidelity(p[members], piece, offset)))
            cut_w = (
                float(np.sum(sub_w[piece[sub_edges[:, 0]] != piece[sub_edges[:, 1]]]))
                if sub_edges.size
                else 0.0
            )
            delta = new_fid + lam * cut_w - old_fid
            if delta < -tol:
                comp[members] = next_id + piece
                next_id += offset
                changed = True
        energy = _total_energy(p, edges, weights, lam, comp)
        assert energy <= trace[-1] + tol, f"energy increased after split sweep: {trace[-1]} -> {energy}"
        trace.append(energy)

        # Merge sweep: undo over-segmentation (zero-cost merges included).
        merged = _merge_pass(p, edges, weights, lam, comp, tol)
        if merged:
            energy = _total_energy(p, edges, weights, lam, comp)
            assert energy <= trace[-1] + tol, f"energy increased after merge sweep: {trace[-1]} -> {energy}"
            trace.append(energy)
        # Boundary refinement: single-node moves between adjacent components
        # (or to fresh singletons) escape minima that binary cuts with two
        # shared centers cannot express.
        moved = _move_pass(p, edges, weights, lam, comp, tol)
        if moved:
            # Moves may disconnect a component; re-extract connected pieces
            # (never raises the energy: pieces share no edges).
            inner = edges[comp[edges[:, 0]] == comp[edges[:, 1]]] if edges.size else edges
            comp = _connected_labels(n, inner)
            next_id = int(comp.max()) + 1
            energy = _total_energy(p, edges, weights, lam, comp)
            assert energy <= trace[-1] + tol, f"energy increased after move sweep: {trace[-1]} -> {energy}"
            trace.append(energy)
        if not changed and not merged and not moved:
            break

    # Tiny problems get polished to the exact optimum: the greedy scheme is
    # monotone and cannot cross multi-step energy barriers, while
    # enumeration is trivially affordable at this size.
    if n <= _EXACT_LIMIT:
        exact = _exact_small_partition(p, edges, weights, lam)
        if exact is not None:
            exact_energy = _total_energy(p, edges, weights, lam, exact)
            if exact_energy < trace[-1] - tol:
                comp = exact
                trace.append(exact_energy)

    # Contiguous ids ordered by first member occurrence.
    _, first, inv = np.unique(comp, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    comp = rank[inv]
    n_comp = first.size
    counts = np.bincount(comp, minlength=n_comp).astype(np.float64)
    values = np.zeros((n_comp, p.shape[1]))
    for d in range(p.shape[1]):
        values[:, d] = np.bincount(comp, weights=p[:, d], minlength=n_comp) / counts
    return Partition(
        assignment=comp.astype(np.int32),
        superpoint_value=values,
        energy=trace[-1],
        energy_trace=trace,
    )


def _merge_pass(
    p: np.ndarray,
    edges: np.ndarray,
    weights: np.ndarray,
    lam: float,
    comp: np.ndarray,
    tol: float,
) -> bool:
    """Greedily merge adjacent components while the energy does not rise.

    Mutates `comp` in place; returns whether anything merged.
    """
    if edges.size == 0:
        return False
    uniq, inv = np.unique(comp, return_inverse=True)
    n_groups = uniq.size
    if n_groups < 2:
        return False
    counts = np.bincount(inv, minlength=n_groups).astype(np.float64)
    sq = np.bincount(inv, weights=np.sum(p * p, axis=1), minlength=n_groups)
    sums = np.zeros((n_groups, p.shape[1]))
    for d in range(p.shape[1]):
        sums[:, d] = np.bincount(inv, weights=p[:, d], minlength=n_groups)

    stats_count = {i: counts[i] for i in range(n_groups)}
    stats_sum = {i: sums[i].copy() for i in range(n_groups)}
    stats_sq = {i: float(sq[i]) for i in range(n_groups)}

    def fid(c: int) -> float:
        s = stats_sum[c]
        return stats_sq[c] - float(np.dot(s, s)) / stats_count[c]

    cross: Dict[Tuple[int, int], float] = {}
    cu = inv[edges[:, 0]]
    cv = inv[edges[:, 1]]
    for e in np.nonzero(cu != cv)[0]:
        key = (int(min(cu[e], cv[e])), int(max(cu[e], cv[e])))
        cross[key] = cross.get(key, 0.0) + float(weights[e])

    def merge_delta(a: int, b: int, wsum: float) -> float:
        s = stats_sum[a] + stats_sum[b]
        union_fid = stats_sq[a] + stats_sq[b] - float(np.dot(s, s)) / (stats_count[a] + stats_count[b])
        return union_fid - fid(a) - fid(b) - lam * wsum

    alias = np.arange(n_groups)
    any_merged = False
    while cross:
        best_key = None
        best_delta = tol
        for (a, b), wsum in sorted(cross.items()):
            delta = merge_delta(a, b, wsum)
            if delta < best_delta:
                best_delta = delta
                best_key = (a, b)
        if best_key is None:
            break
        a, b = best_key
        stats_count[a] += stats_count.pop(b)
        stats_sum[a] = stats_sum[a] + stats_sum.pop(b)
        stats_sq[a] += stats_sq.pop(b)
        alias[alias == b] = a
        new_cross: Dict[Tuple[int, int], float] = {}
        for (x, y), wsum in cross.items():
            x = a if x == b else x
            y = a if y == b else y
            if x == y:
                continue
            key = (min(x, y), max(x, y))
            new_cross[key] = new_cross.get(key, 0.0) + wsum
        cross = new_cross
        any_merged = True
    if any_merged:
        comp[:] = uniq[alias[inv]]
    return any_merged


def _move_pass(
    p: np.ndarray,
    edges: np.ndarray,
    weights: np.ndarray,
    lam: float,
    comp: np.ndarray,
    tol: float,
    max_sweeps: int = 3,
) -> bool:
    """Greedy single-node reassignment between adjacent components.

    Each boundary node may defect to a neighboring component or to a fresh
    singleton when that strictly lowers the energy. Mutates `comp`.
    """
    n = p.shape[0]
    if edges.size == 0:
        return False
    uniq, inv = np.unique(comp, return_inverse=True)
    labels = inv.astype(np.int64)  # working ids: 0..k-1, singletons appended
    capacity = uniq.size + n
    d = p.shape[1]
    count = np.zeros(capacity)
    sums = np.zeros((capacity, d))
    sq = np.zeros(capacity)
    np.add.at(count, labels, 1.0)
    np.add.at(sq, labels, np.sum(p * p, axis=1))
    for dd in range(d):
        np.add.at(sums[:, dd], labels, p[:, dd])
    n_groups = uniq.size

    # Per-node incidence lists (edge index CSR).
    deg = np.zeros(n + 1, dtype=np.int64)
    np.add.at(deg, edges[:, 0] + 1, 1)
    np.add.at(deg, edges[:, 1] + 1, 1)
    starts = np.cumsum(deg)
    fill = starts[:-1].copy()
    incident = np.empty(2 * edges.shape[0], dtype=np.int64)
    other = np.empty(2 * edges.shape[0], dtype=np.int64)
    for e in range(edges.shape[0]):
        u, v = edges[e]
        incident[fill[u]] = e
        other[fill[u]] = v
        fill[u] += 1
        incident[fill[v]] = e
        other[fill[v]] = u
        fill[v] += 1

    def fid_of(c: int) -> float:
        if count[c] <= 0:
            return 0.0
        return sq[c] - float(np.dot(sums[c], sums[c])) / count[c]

    # Large graphs: only boundary nodes (cross-edge endpoints) are worth
    # visiting; interior outliers are handled by the split sweeps.
    small = n <= 2048
    if small:
        candidates = np.arange(n)
        sweeps = max_sweeps
    else:
        cross = labels[edges[:, 0]] != labels[edges[:, 1]]
        candidates = np.unique(edges[cross])
        sweeps = 1
    any_moved = False
    for _ in range(sweeps):
        sweep_moved = False
        for v in candidates:
            a = labels[v]
            own_w = 0.0
            neighbor_w: Dict[int, float] = {}
            for slot in range(starts[v], starts[v + 1]):
                c = labels[other[slot]]
                w = float(weights[incident[slot]])
                if c == a:
                    own_w += w
                else:
                    neighbor_w[c] = neighbor_w.get(c, 0.0) + w
            pv = p[v]
            pv_sq = float(np.dot(pv, pv))
            fid_a_before = fid_of(a)
            count[a] -= 1
            sums[a] -= pv
            sq[a] -= pv_sq
            fid_a_after = fid_of(a)
            base_delta = fid_a_after - fid_a_before + lam * own_w
            best_delta = -tol
            best_target = -1
            if count[a] > 0:  # singleton defection only leaves a component behind
                if base_delta < best_delta:
                    best_delta = base_delta
                    best_target = n_groups  # placeholder for "new singleton"
            for c in sorted(neighbor_w):
                fid_b_before = fid_of(c)
                count[c] += 1
                sums[c] += pv
                sq[c] += pv_sq
                fid_b_after = fid_of(c)
                count[c] -= 1
                sums[c] -= pv
                sq[c] -= pv_sq
                delta = base_delta + fid_b_after - fid_b_before - lam * neighbor_w[c]
                if delta < best_delta:
                    best_delta = delta
                    best_target = c
            if best_target < 0:
                # Revert the tentative removal.
                count[a] += 1
                sums[a] += pv
                sq[a] += pv_sq
                continue
            if best_target == n_groups:
                best_target = n_groups
                n_groups += 1
            count[best_target] += 1
            sums[best_target] += pv
            sq[best_target] += pv_sq
            labels[v] = best_target
            sweep_moved = True
            any_moved = True
        if not sweep_moved:
            break
    if any_moved:
        comp[:] = labels
    return any_moved


def partition_scene(
    scene,
    labelings: Optional[Sequence[GpLabeling]] = None,
    k: int = 10,
    channels: Sequence[str] = ("position", "color", "normal"),
    channel_scales: Optional[Dict[str, float]] = None,
    lam: float = DEFAULT_LAMBDA,
    delta_plus: float = DEFAULT_DELTA_PLUS,
    delta_minus: float = DEFAULT_DELTA_MINUS,
    clamp: float = DEFAULT_CLAMP,
    use_decay: bool = True,
    d0_factor: float = 2.0,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
) -> Tuple[Partition, Optional[AdjacencyGraph]]:
    """Level-0 partitioning: graph build, mask reweighting, cut pursuit."""
    from .graph import build_weighted_graph, node_features

    if len(scene) == 1:
        feats = node_features(scene, channels, channel_scales)
        return (
            Partition(
                assignment=np.zeros(1, dtype=np.int32),
                superpoint_value=feats.copy(),
                energy=0.0,
                energy_trace=[0.0],
            ),
            None,
        )
    graph = build_weighted_graph(scene, k, channels, channel_scales)
    if labelings:
        graph = reweight(
            graph,
            labelings,
            delta_plus=delta_plus,
            delta_minus=delta_minus,
            clamp=clamp,
            use_decay=use_decay,
            d0_factor=d0_factor,
        )
    return cut_pursuit(graph, lam, max_iterations), graph


def validate_partition(graph: AdjacencyGraph, partition: Partition, tol: float = 1e-6) -> None:
    """Check connectivity, contiguous ids and value-mean consistency."""
    comp = partition.assignment
    n_comp = partition.superpoint_count
    if sorted(np.unique(comp).tolist()) != list(range(n_comp)):
        raise ValidationError("superpoint ids not contiguous")
    if graph.node_feature is not None:
        for c in range(n_comp):
            mean = graph.node_feature[comp == c].mean(axis=0)
            if np.abs(mean - partition.superpoint_value[c]).max() > tol:
                raise ValidationError(f"superpoint {c} value differs from member mean")
    # Connectivity: within-component edges must span each component.
    edges = graph.edges
    for c in range(n_comp):
        members = np.nonzero(comp == c)[0]
        if members.size == 1:
            continue
        local = {int(g): i for i, g in enumerate(members)}
        adj: List[List[int]] = [[] for _ in members]
        mask = (comp[edges[:, 0]] == c) & (comp[edges[:, 1]] == c)
        for a, b in edges[mask]:
            adj[local[int(a)]].append(local[int(b)])
            adj[local[int(b)]].append(local[int(a)])
        seen = np.zeros(members.size, dtype=bool)
        stack = [0]
        seen[0] = True
        while stack:
            x = stack.pop()
            for y in adj[x]:
                if not seen[y]:
                    seen[y] = True
                    stack.append(y)
        if not seen.all():
            raise ValidationError(f"superpoint {c} is not connected")


def save_partition(partition: Partition, path: str | Path) -> None:
    header = PARTITION_MAGIC + struct.pack(
        "<III", 1, partition.assignment.shape[0], partition.superpoint_count
    )
    Path(path).write_bytes(header + partition.assignment.astype("<u4").tobytes())


def load_partition_assignment(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != PARTITION_MAGIC:
        raise FormatError("not a partition file (bad magic)")
    version, n, _ = struct.unpack("<III", data[4:16])
    if version != 1:
        raise FormatError(f"unsupported partition file version {version}")
    if len(data) < 16 + 4 * n:
        raise FormatError("partition file truncated")
    return np.frombuffer(data[16:16 + 4 * n], dtype="<u4").astype(np.int64)
