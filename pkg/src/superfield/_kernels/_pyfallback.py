"""Pure-NumPy implementations of the hot kernels.

Selected at import time when the compiled extension is unavailable (or
when SUPERFIELD_KERNEL=python). Semantics must match _native exactly up
to floating-point accumulation order; per-pixel compositing sequences
are identical in both backends.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def composite_view(
    means,
    inv_cov,
    opacity,
    gp_index,
    bbox,
    height,
    width,
    tile_size,
    alpha_max,
    alpha_cut,
    w_min,
    vis_out=None,
    label_map=None,
    codebook=None,
    latent_out=None,
    select=None,
    presence_out=None,
    argmax_gp_out=None,
    argmax_w_out=None,
    accum_out=None,
    residual_out=None,
):
    """Tile-binned front-to-back compositing with optional accumulators.

    Inputs are presorted by depth; `bbox` holds half-open pixel ranges
    (x0, x1, y0, y1) already clipped to the screen. Per pixel, a splat
    whose effective alpha falls below `alpha_cut`, or whose compositing
    weight falls below `w_min`, is skipped entirely (no transmittance
    update), which keeps sum(weights) + residual == 1 exact.
    """
    m = means.shape[0]
    tiles_x = (width + tile_size - 1) // tile_size
    tiles_y = (height + tile_size - 1) // tile_size

    # Counting-sort splats into tiles; per-tile lists stay depth-ordered.
    tx0 = bbox[:, 0] // tile_size
    tx1 = (bbox[:, 1] - 1) // tile_size
    ty0 = bbox[:, 2] // tile_size
    ty1 = (bbox[:, 3] - 1) // tile_size
    tile_lists: list[list[int]] = [[] for _ in range(tiles_x * tiles_y)]
    for s in range(m):
        for ty in range(ty0[s], ty1[s] + 1):
            base = ty * tiles_x
            for tx in range(tx0[s], tx1[s] + 1):
                tile_lists[base + tx].append(s)

    transmittance = np.ones((height, width), dtype=np.float64)
    want_latent = latent_out is not None and label_map is not None and codebook is not None

    for ty in range(tiles_y):
        for tx in range(tiles_x):
            ids = tile_lists[ty * tiles_x + tx]
            if not ids:
                continue
            px0, px1 = tx * tile_size, min((tx + 1) * tile_size, width)
            py0, py1 = ty * tile_size, min((ty + 1) * tile_size, height)
            for s in ids:
                bx0 = max(bbox[s, 0], px0)
                bx1 = min(bbox[s, 1], px1)
                by0 = max(bbox[s, 2], py0)
                by1 = min(bbox[s, 3], py1)
                if bx0 >= bx1 or by0 >= by1:
                    continue
                dx = np.arange(bx0, bx1, dtype=np.float64) + 0.5 - means[s, 0]
                dy = np.arange(by0, by1, dtype=np.float64) + 0.5 - means[s, 1]
                a, b, c = inv_cov[s]
                q = (
                    a * dx[None, :] ** 2
                    + 2.0 * b * dx[None, :] * dy[:, None]
                    + c * dy[:, None] ** 2
                )
                alpha = opacity[s] * np.exp(-0.5 * q)
                np.minimum(alpha, alpha_max, out=alpha)
                alpha[alpha < alpha_cut] = 0.0
                tsub = transmittance[by0:by1, bx0:bx1]
                w = alpha * tsub
                keep = w >= w_min
                if not keep.any():
                    continue
                wk = np.where(keep, w, 0.0)
                g = gp_index[s]
                total = wk.sum()
                if vis_out is not None:
                    vis_out[g] += total
                if want_latent:
                    labels = label_map[by0:by1, bx0:bx1][keep]
                    latent_out[g] += wk[keep] @ codebook[labels]
                if presence_out is not None and select is not None and select[g]:
                    presence_out[by0:by1, bx0:bx1] += wk
                if accum_out is not None:
                    accum_out[by0:by1, bx0:bx1] += wk
                if argmax_w_out is not None and argmax_gp_out is not None:
                    sub_w = argmax_w_out[by0:by1, bx0:bx1]
                    sub_g = argmax_gp_out[by0:by1, bx0:bx1]
                    upd = wk > sub_w
                    sub_w[upd] = wk[upd]
                    sub_g[upd] = g
                transmittance[by0:by1, bx0:bx1] = np.where(keep, tsub * (1.0 - alpha), tsub)

    if residual_out is not None:
        residual_out[:, :] = transmittance


def min_cut(n, src_cap, sink_cap, edge_u, edge_v, edge_cap):
    """Exact s-t min cut via Dinic's algorithm on float capacities.

    Pairwise edges are undirected with symmetric capacity. Returns
    (flow_value, source_side) where source_side[i] == 1 iff node i stays
    reachable from the source in the final residual graph.
    """
    n_edges = edge_u.shape[0]
    src, snk = n, n + 1
    total = n + 2

    arc_to = []
    arc_cap = []
    heads: list[list[int]] = [[] for _ in range(total)]

    def add_arc(u, v, cap_uv, cap_vu):
        heads[u].append(len(arc_to))
        arc_to.append(v)
        arc_cap.append(cap_uv)
        heads[v].append(len(arc_to))
        arc_to.append(u)
        arc_cap.append(cap_vu)

    for i in range(n):
        if src_cap[i] > 0.0:
            add_arc(src, i, float(src_cap[i]), 0.0)
    for i in range(n):
        if sink_cap[i] > 0.0:
            add_arc(i, snk, float(sink_cap[i]), 0.0)
    for e in range(n_edges):
        c = float(edge_cap[e])
        if c > 0.0:
            add_arc(int(edge_u[e]), int(edge_v[e]), c, c)

    cap_scale = max(arc_cap, default=0.0)
    eps = 1e-12 * max(cap_scale, 1.0)

    level = np.empty(total, dtype=np.int64)
    it = np.zeros(total, dtype=np.int64)
    flow = 0.0

    def bfs() -> bool:
        level.fill(-1)
        level[src] = 0
        queue = [src]
        qi = 0
        while qi < len(queue):
            u = queue[qi]
            qi += 1
            for a in heads[u]:
                v = arc_to[a]
                if level[v] < 0 and arc_cap[a] > eps:
                    level[v] = level[u] + 1
                    queue.append(v)
        return level[snk] >= 0

    def dfs(u, limit) -> float:
        if u == snk:
            return limit
        while it[u] < len(heads[u]):
            a = heads[u][it[u]]
            v = arc_to[a]
            if arc_cap[a] > eps and level[v] == level[u] + 1:
                pushed = dfs(v, min(limit, arc_cap[a]))
                if pushed > 0.0:
                    arc_cap[a] -= pushed
                    arc_cap[a ^ 1] += pushed
                    return pushed
            it[u] += 1
        return 0.0

    import sys

    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, total + 100))
    try:
        while bfs():
            it.fill(0)
            while True:
                pushed = dfs(src, float("inf"))
                if pushed <= 0.0:
                    break
                flow += pushed
    finally:
        sys.setrecursionlimit(old_limit)

    side = np.zeros(n, dtype=np.uint8)
    seen = np.zeros(total, dtype=bool)
    seen[src] = True
    queue = [src]
    qi = 0
    while qi < len(queue):
        u = queue[qi]
        qi += 1
        for a in heads[u]:
            v = arc_to[a]
            if not seen[v] and arc_cap[a] > eps:
                seen[v] = True
                queue.append(v)
    side[:] = seen[:n]
    return flow, side
