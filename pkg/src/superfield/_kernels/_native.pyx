# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Semantics mirror _pyfallback exactly: identical per-pixel compositing
sequences; per-primitive accumulators may differ in floating-point
summation order only.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp

BACKEND_NAME = "native"

ctypedef cnp.int32_t i32
ctypedef cnp.uint32_t u32
ctypedef cnp.uint8_t u8
ctypedef cnp.float32_t f32
ctypedef cnp.float64_t f64
ctypedef cnp.int64_t i64


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
    """Tile-binned front-to-back compositing with optional accumulators."""
    cdef bint has_vis = vis_out is not None
    cdef bint has_latent = (
        latent_out is not None and label_map is not None and codebook is not None
    )
    cdef bint has_presence = presence_out is not None and select is not None
    cdef bint has_argmax = argmax_gp_out is not None and argmax_w_out is not None
    cdef bint has_accum = accum_out is not None
    cdef bint has_residual = residual_out is not None

    dummy_f64 = np.zeros(1, dtype=np.float64)
    dummy_f64_2d = np.zeros((1, 1), dtype=np.float64)
    dummy_f32_2d = np.zeros((1, 1), dtype=np.float32)
    dummy_i32_2d = np.zeros((1, 1), dtype=np.int32)
    dummy_u32_2d = np.zeros((1, 1), dtype=np.uint32)
    dummy_u8 = np.zeros(1, dtype=np.uint8)

    _composite_impl(
        np.ascontiguousarray(means, dtype=np.float64),
        np.ascontiguousarray(inv_cov, dtype=np.float64),
        np.ascontiguousarray(opacity, dtype=np.float64),
        np.ascontiguousarray(gp_index, dtype=np.int32),
        np.ascontiguousarray(bbox, dtype=np.int32),
        int(height), int(width), int(tile_size),
        float(alpha_max), float(alpha_cut), float(w_min),
        has_vis, vis_out if has_vis else dummy_f64,
        has_latent,
        np.ascontiguousarray(label_map, dtype=np.uint32) if has_latent else dummy_u32_2d,
        np.ascontiguousarray(codebook, dtype=np.float64) if has_latent else dummy_f64_2d,
        latent_out if has_latent else dummy_f64_2d,
        has_presence,
        np.ascontiguousarray(select, dtype=np.uint8) if has_presence else dummy_u8,
        presence_out if has_presence else dummy_f32_2d,
        has_argmax,
        argmax_gp_out if has_argmax else dummy_i32_2d,
        argmax_w_out if has_argmax else dummy_f32_2d,
        has_accum, accum_out if has_accum else dummy_f32_2d,
        has_residual, residual_out if has_residual else dummy_f32_2d,
    )


cdef void _composite_impl(
    f64[:, ::1] means,
    f64[:, ::1] inv_cov,
    f64[::1] opacity,
    i32[::1] gp_index,
    i32[:, ::1] bbox,
    int height, int width, int tile,
    double alpha_max, double alpha_cut, double w_min,
    bint has_vis, f64[::1] vis,
    bint has_latent, u32[:, ::1] label_map, f64[:, ::1] codebook, f64[:, ::1] latent,
    bint has_presence, u8[::1] select, f32[:, ::1] presence,
    bint has_argmax, i32[:, ::1] argmax_gp, f32[:, ::1] argmax_w,
    bint has_accum, f32[:, ::1] accum,
    bint has_residual, f32[:, ::1] residual,
):
    cdef Py_ssize_t m = means.shape[0]
    cdef int tiles_x = (width + tile - 1) // tile
    cdef int tiles_y = (height + tile - 1) // tile
    cdef Py_ssize_t n_tiles = tiles_x * tiles_y
    cdef Py_ssize_t s, e, d, idx
    cdef int tx, ty, tx0, tx1, ty0, ty1, px, py, px0, px1, py0, py1
    cdef int latent_dim = codebook.shape[1] if has_latent else 0

    counts_arr = np.zeros(n_tiles + 1, dtype=np.int64)
    cdef i64[::1] counts = counts_arr
    for s in range(m):
        tx0 = bbox[s, 0] // tile
        tx1 = (bbox[s, 1] - 1) // tile
        ty0 = bbox[s, 2] // tile
        ty1 = (bbox[s, 3] - 1) // tile
        for ty in range(ty0, ty1 + 1):
            for tx in range(tx0, tx1 + 1):
                counts[ty * tiles_x + tx + 1] += 1
    starts_arr = np.cumsum(counts_arr).astype(np.int64)
    cdef i64[::1] starts = starts_arr
    fill_arr = starts_arr[:-1].copy()
    cdef i64[::1] fill = fill_arr
    cdef Py_ssize_t total = starts[n_tiles]
    order_arr = np.empty(total, dtype=np.int64)
    cdef i64[::1] tile_splats = order_arr
    cdef Py_ssize_t tid
    for s in range(m):
        tx0 = bbox[s, 0] // tile
        tx1 = (bbox[s, 1] - 1) // tile
        ty0 = bbox[s, 2] // tile
        ty1 = (bbox[s, 3] - 1) // tile
        for ty in range(ty0, ty1 + 1):
            for tx in range(tx0, tx1 + 1):
                tid = ty * tiles_x + tx
                tile_splats[fill[tid]] = s
                fill[tid] += 1

    cdef double t, dx, dy, q, alpha, w
    cdef int g
    cdef u32 lab
    cdef Py_ssize_t a, b
    for ty in range(tiles_y):
        py0 = ty * tile
        py1 = min(py0 + tile, height)
        for tx in range(tiles_x):
            tid = ty * tiles_x + tx
            a = starts[tid]
            b = starts[tid + 1]
            if a == b and not has_residual:
                continue
            px0 = tx * tile
            px1 = min(px0 + tile, width)
            for py in range(py0, py1):
                for px in range(px0, px1):
                    t = 1.0
                    for idx in range(a, b):
                        s = tile_splats[idx]
                        if (
                            px < bbox[s, 0] or px >= bbox[s, 1]
                            or py < bbox[s, 2] or py >= bbox[s, 3]
                        ):
                            continue
                        dx = px + 0.5 - means[s, 0]
                        dy = py + 0.5 - means[s, 1]
                        q = (
                            inv_cov[s, 0] * dx * dx
                            + 2.0 * inv_cov[s, 1] * dx * dy
                            + inv_cov[s, 2] * dy * dy
                        )
                        alpha = opacity[s] * exp(-0.5 * q)
                        if alpha > alpha_max:
                            alpha = alpha_max
                        if alpha < alpha_cut:
                            continue
                        w = alpha * t
                        if w < w_min:
                            if t < w_min:
                                break  # no later weight can reach w_min
                            continue
                        g = gp_index[s]
                        if has_vis:
                            vis[g] += w
                        if has_latent:
                            lab = label_map[py, px]
                            for d in range(latent_dim):
                                latent[g, d] += w * codebook[lab, d]
                        if has_presence and select[g]:
                            presence[py, px] = <f32> (presence[py, px] + w)
                        if has_accum:
                            accum[py, px] = <f32> (accum[py, px] + w)
                        if has_argmax and w > argmax_w[py, px]:
                            argmax_w[py, px] = <f32> w
                            argmax_gp[py, px] = g
                        t *= 1.0 - alpha
                    if has_residual:
                        residual[py, px] = <f32> t


def min_cut(n, src_cap, sink_cap, edge_u, edge_v, edge_cap):
    """Exact s-t min cut via Dinic's algorithm (see _pyfallback.min_cut)."""
    cdef f64[::1] sc = np.ascontiguousarray(src_cap, dtype=np.float64)
    cdef f64[::1] kc = np.ascontiguousarray(sink_cap, dtype=np.float64)
    cdef i32[::1] eu = np.ascontiguousarray(edge_u, dtype=np.int32)
    cdef i32[::1] ev = np.ascontiguousarray(edge_v, dtype=np.int32)
    cdef f64[::1] ec = np.ascontiguousarray(edge_cap, dtype=np.float64)
    cdef Py_ssize_t nn = int(n)
    cdef Py_ssize_t n_edges = eu.shape[0]
    cdef Py_ssize_t total = nn + 2
    cdef Py_ssize_t src = nn, snk = nn + 1

    # Count arcs (two per link) in insertion order: source, sink, pairwise.
    cdef Py_ssize_t i, e
    cdef Py_ssize_t n_arcs = 0
    for i in range(nn):
        if sc[i] > 0.0:
            n_arcs += 2
    for i in range(nn):
        if kc[i] > 0.0:
            n_arcs += 2
    for e in range(n_edges):
        if ec[e] > 0.0:
            n_arcs += 2

    arc_to_arr = np.empty(n_arcs, dtype=np.int64)
    arc_cap_arr = np.empty(n_arcs, dtype=np.float64)
    cdef i64[::1] arc_to = arc_to_arr
    cdef f64[::1] arc_cap = arc_cap_arr
    cdef Py_ssize_t pos = 0
    for i in range(nn):
        if sc[i] > 0.0:
            arc_to[pos] = i; arc_cap[pos] = sc[i]
            arc_to[pos + 1] = src; arc_cap[pos + 1] = 0.0
            pos += 2
    for i in range(nn):
        if kc[i] > 0.0:
            arc_to[pos] = snk; arc_cap[pos] = kc[i]
            arc_to[pos + 1] = i; arc_cap[pos + 1] = 0.0
            pos += 2
    for e in range(n_edges):
        if ec[e] > 0.0:
            arc_to[pos] = ev[e]; arc_cap[pos] = ec[e]
            arc_to[pos + 1] = eu[e]; arc_cap[pos + 1] = ec[e]
            pos += 2

    cdef double cap_scale = 1.0
    for i in range(n_arcs):
        if arc_cap[i] > cap_scale:
            cap_scale = arc_cap[i]
    cdef double eps = 1e-12 * cap_scale

    # CSR adjacency in insertion order (arc a starts at arc_to[a ^ 1]).
    deg_arr = np.zeros(total + 1, dtype=np.int64)
    cdef i64[::1] deg = deg_arr
    for i in range(n_arcs):
        deg[arc_to[i ^ 1] + 1] += 1
    adj_start_arr = np.cumsum(deg_arr).astype(np.int64)
    cdef i64[::1] adj_start = adj_start_arr
    adj_fill_arr = adj_start_arr[:-1].copy()
    cdef i64[::1] adj_fill = adj_fill_arr
    adj_arr = np.empty(n_arcs, dtype=np.int64)
    cdef i64[::1] adj = adj_arr
    cdef Py_ssize_t u_node
    for i in range(n_arcs):
        u_node = arc_to[i ^ 1]
        adj[adj_fill[u_node]] = i
        adj_fill[u_node] += 1

    level_arr = np.empty(total, dtype=np.int64)
    it_arr = np.empty(total, dtype=np.int64)
    queue_arr = np.empty(total, dtype=np.int64)
    path_arr = np.empty(total + 1, dtype=np.int64)
    cdef i64[::1] level = level_arr
    cdef i64[::1] it = it_arr
    cdef i64[::1] queue = queue_arr
    cdef i64[::1] path = path_arr

    cdef double flow = 0.0, bottleneck
    cdef Py_ssize_t head, tail, u, v, a, depth, j, cut_at

    while True:
        # BFS level graph.
        for i in range(total):
            level[i] = -1
        level[src] = 0
        queue[0] = src
        head = 0
        tail = 1
        while head < tail:
            u = queue[head]
            head += 1
            for j in range(adj_start[u], adj_start[u + 1]):
                a = adj[j]
                v = arc_to[a]
                if level[v] < 0 and arc_cap[a] > eps:
                    level[v] = level[u] + 1
                    queue[tail] = v
                    tail += 1
        if level[snk] < 0:
            break
        for i in range(total):
            it[i] = adj_start[i]
        # Blocking flow via iterative DFS.
        u = src
        depth = 0
        while True:
            if u == snk:
                bottleneck = -1.0
                for j in range(depth):
                    a = path[j]
                    if bottleneck < 0.0 or arc_cap[a] < bottleneck:
                        bottleneck = arc_cap[a]
                cut_at = 0
                for j in range(depth):
                    a = path[j]
                    arc_cap[a] -= bottleneck
                    arc_cap[a ^ 1] += bottleneck
                flow += bottleneck
                # Retreat to the tail of the first saturated arc.
                for j in range(depth):
                    if arc_cap[path[j]] <= eps:
                        cut_at = j
                        break
                depth = cut_at
                u = arc_to[path[depth - 1]] if depth > 0 else src
                continue
            # Advance along an admissible arc if possible.
            a = -1
            while it[u] < adj_start[u + 1]:
                a = adj[it[u]]
                v = arc_to[a]
                if arc_cap[a] > eps and level[v] == level[u] + 1:
                    break
                it[u] += 1
                a = -1
            if a >= 0:
                path[depth] = a
                depth += 1
                u = arc_to[a]
            else:
                if u == src:
                    break
                # Dead end: prune and retreat to the popped arc's tail; the
                # parent iterator re-checks that arc and skips it (level -1).
                level[u] = -1
                depth -= 1
                u = arc_to[path[depth] ^ 1]

    # Source side of the cut: residual reachability.
    side_arr = np.zeros(nn, dtype=np.uint8)
    cdef u8[::1] side = side_arr
    seen_arr = np.zeros(total, dtype=np.uint8)
    cdef u8[::1] seen = seen_arr
    seen[src] = 1
    queue[0] = src
    head = 0
    tail = 1
    while head < tail:
        u = queue[head]
        head += 1
        for j in range(adj_start[u], adj_start[u + 1]):
            a = adj[j]
            v = arc_to[a]
            if not seen[v] and arc_cap[a] > eps:
                seen[v] = 1
                queue[tail] = v
                tail += 1
    for i in range(nn):
        side[i] = seen[i]
    return flow, side_arr
