"""Benchmark: compiled kernels vs the pure-NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--gps N] [--views V]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from superfield._kernels import get_backend
from superfield.render import ProjectedView
from superfield.synthetic import cluster_scene, ring_cameras


def bench_composite(backend, views, n_gp, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for view, cam in views:
            vis = np.zeros(n_gp)
            accum = np.zeros((cam.height, cam.width), np.float32)
            backend.composite_view(
                view.mean2d, view.inv_cov, view.opacity, view.gp_index, view.bbox,
                cam.height, cam.width, 16, 0.99, 1e-4, 1e-4,
                vis_out=vis, accum_out=accum,
            )
        best = min(best, time.perf_counter() - start)
    return best


def bench_min_cut(backend, n, repeats=3):
    # Random geometric graph with unary source/sink terms, the shape the
    # partition solver produces.
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 1, (n, 2))
    from scipy.spatial import cKDTree

    tree = cKDTree(pts)
    pairs = tree.query_pairs(0.05, output_type="ndarray")
    cap = rng.uniform(0.1, 1.0, pairs.shape[0])
    src = rng.uniform(0, 1, n)
    snk = rng.uniform(0, 1, n)
    eu = pairs[:, 0].astype(np.int32)
    ev = pairs[:, 1].astype(np.int32)
    best = float("inf")
    flow = None
    for _ in range(repeats):
        start = time.perf_counter()
        flow, _ = backend.min_cut(n, src, snk, eu, ev, cap)
        best = min(best, time.perf_counter() - start)
    return best, flow


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--gps", type=int, default=20_000)
    parser.add_argument("--views", type=int, default=4)
    parser.add_argument("--flow-nodes", type=int, default=20_000)
    args = parser.parse_args()

    backends = {}
    for name in ("python", "native"):
        try:
            backends[name] = get_backend(name)
        except ImportError:
            print(f"backend {name!r} unavailable, skipping")
    if not backends:
        raise SystemExit("no kernel backend available")

    rng = np.random.default_rng(1)
    k = max(4, args.gps // 4000)
    centers = rng.uniform(-4, 4, (k, 3))
    scene, _ = cluster_scene(centers, args.gps // k, spread=0.8, rng=rng)
    cameras = ring_cameras(args.views, radius=14.0)
    views = [
        (ProjectedView(scene, cameras[v]), cameras[v]) for v in sorted(cameras)[: args.views]
    ]
    print(f"scene: {len(scene)} primitives, {args.views} views at 256x256\n")

    results = {}
    print(f"{'kernel':<22}{'backend':<10}{'time':>10}")
    for name, backend in backends.items():
        secs = bench_composite(backend, views, len(scene))
        results[("composite", name)] = secs
        print(f"{'composite_view':<22}{name:<10}{secs * 1000:>8.1f}ms")
    for name, backend in backends.items():
        secs, flow = bench_min_cut(backend, args.flow_nodes)
        results[("min_cut", name)] = secs
        print(f"{'min_cut (n=%d)' % args.flow_nodes:<22}{name:<10}{secs * 1000:>8.1f}ms")
    print()
    for kernel in ("composite", "min_cut"):
        if (kernel, "native") in results and (kernel, "python") in results:
            speedup = results[(kernel, "python")] / results[(kernel, "native")]
            print(f"{kernel}: native is {speedup:.1f}x faster than the fallback")


if __name__ == "__main__":
    main()
