"""Acceptance suite: one test per release criterion, with a PASS line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
summary lines.
"""

import time

import numpy as np
import pytest

from superfield.graph import AdjacencyGraph, build_knn
from superfield.labels import encode_labels, reproject
from superfield.partition import cut_pursuit, partition_scene, reweight
from superfield.pipeline import PipelineConfig, build_field
from superfield.query import QuerySpec, evaluate_2d, query, relevance
from superfield.render import ProjectedView, RenderConfig, composite_pixel, render_presence
from superfield.scene_io import export_hierarchy
from superfield.synthetic import (
    canonical_embeddings,
    cluster_scene,
    look_at_camera,
    random_unit,
    three_objects_fixture,
    touching_clusters_fixture,
)
from superfield.types import GaussianScene, MaskObservation

from .conftest import random_scene
from .oracles import (
    brute_force_knn_edges,
    eq5_weights,
    eq6_reweight,
    eq8_latents_from_contribs,
    eq9_argmax,
    eq10_affinity,
    eq11_feature,
    eq12_relevance,
    exhaustive_partition_energy,
    naive_composite,
)


def report(criterion: int, message: str) -> None:
    print(f"[PASS] criterion {criterion}: {message}")


@pytest.fixture(scope="module")
def full_fixture():
    return three_objects_fixture(per_subpart=75, n_views=12)


@pytest.fixture(scope="module")
def full_field(full_fixture):
    start = time.perf_counter()
    hierarchy, timing = build_field(
        full_fixture.scene,
        full_fixture.cameras,
        full_fixture.observations,
        full_fixture.features,
        PipelineConfig(),
    )
    return hierarchy, timing, time.perf_counter() - start


def test_criterion_1_knn_exactness():
    start = time.perf_counter()
    checked = 0
    for trial in range(20):
        rng = np.random.default_rng(trial)
        n = int(rng.integers(20, 501))
        k = int(rng.choice([1, 4, 8, 16]))
        pts = rng.uniform(0, 1, (n, 3))
        graph = build_knn(pts, k)
        assert graph.edge_set() == brute_force_knn_edges(pts, k), (trial, n, k)
        checked += 1
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0, f"KNN exactness check took {elapsed:.1f}s (budget 5s)"
    report(1, f"{checked} instances match brute force in {elapsed:.2f}s")


def test_criterion_2_compositing_conservation(rng):
    scene = random_scene(rng, 150)
    cam = look_at_camera((0.3, -0.8, 9.0), (0, 0, 0), width=128, height=128, focal=80.0)
    view = ProjectedView(scene, cam)
    from superfield.render import ScreenSplat

    splats = [
        ScreenSplat(
            gp_index=int(view.gp_index[i]),
            mean2d=view.mean2d[i],
            cov2d=np.array(
                [[view.cov2d[i, 0], view.cov2d[i, 1]], [view.cov2d[i, 1], view.cov2d[i, 2]]]
            ),
            depth=float(view.depth[i]),
            base_opacity=float(view.opacity[i]),
        )
        for i in range(len(view))
    ]
    checked = 0
    worst = 0.0
    for _ in range(1000):
        px = rng.uniform(0, cam.width)
        py = rng.uniform(0, cam.height)
        contribs, residual = composite_pixel(splats, (px, py))
        total = sum(c.weight for c in contribs) + residual
        worst = max(worst, abs(total - 1.0))
        assert abs(total - 1.0) < 1e-6
        trans = [c.transmittance for c in contribs]
        assert all(a >= b - 1e-12 for a, b in zip(trans, trans[1:]))
        checked += 1
    report(2, f"{checked} pixels conserve weight (worst error {worst:.2e})")


def test_criterion_3_cut_pursuit_optimality():
    def random_connected_graph(rng, n):
        edges = set()
        nodes = list(range(n))
        rng.shuffle(nodes)
        for i in range(1, n):
            j = nodes[rng.integers(0, i)]
            edges.add((min(nodes[i], j), max(nodes[i], j)))
        for _ in range(rng.integers(0, n)):
            a, b = rng.integers(0, n, 2)
            if a != b:
                edges.add((min(a, b), max(a, b)))
        return np.array(sorted(edges), dtype=np.int32)

    worst = 0.0
    for trial in range(50):
        rng = np.random.default_rng(900 + trial)
        n = int(rng.integers(2, 9))
        edges = random_connected_graph(rng, n)
        weights = rng.uniform(0.1, 1.0, edges.shape[0])
        values = rng.uniform(-1, 1, 2)
        feats = values[rng.integers(0, 2, n)][:, None]
        lam = float(rng.uniform(0.01, 1.0))
        graph = AdjacencyGraph(n, edges, weights, feats)
        part = cut_pursuit(graph, lam)
        best = exhaustive_partition_energy(feats, edges, weights, lam)
        rel = abs(part.energy - best) / max(abs(best), 1.0)
        worst = max(worst, rel)
        assert rel <= 1e-9, (trial, part.energy, best)
        trace = part.energy_trace
        assert all(b <= a + 1e-9 * max(abs(a), 1.0) for a, b in zip(trace, trace[1:]))
    report(3, f"50 instances at the enumeration optimum (worst rel err {worst:.2e})")


def test_criterion_4_formula_oracles(rng):
    # Eq. 5: edge weights.
    feats = rng.standard_normal((25, 4))
    graph = build_knn(rng.uniform(0, 1, (25, 3)), 4)
    graph.node_feature = feats
    from superfield.graph import compute_weights

    compute_weights(graph)
    assert np.allclose(graph.weight, eq5_weights(feats, graph.edges), atol=1e-9)

    # Eq. 6: reweighting, three views with depth decay.
    from superfield.labels import GpLabeling

    n = 25
    view_labels = [rng.integers(0, 4, n).astype(np.uint32) for _ in range(3)]
    view_depths = [rng.uniform(1, 10, n) for _ in range(3)]
    labelings = [
        GpLabeling(
            view_id=v, level=1, latent=np.zeros((n, 0)), label=view_labels[v],
            confidence=np.ones(n), depth=view_depths[v], total_weight=np.ones(n),
        )
        for v in range(3)
    ]
    expected = eq6_reweight(graph.weight, graph.edges, view_labels, view_depths, 0.5, 0.5, 1e-3)
    reweight(graph, labelings)
    assert np.allclose(graph.weight, expected, atol=1e-9)

    # Eq. 8 + 9: reprojection against the per-pixel loop (accumulation order
    # varies -> 1e-6).
    scene = random_scene(rng, 40)
    cam = look_at_camera((0, 0, 9.0), (0, 0, 0), width=48, height=48, focal=40.0)
    view = ProjectedView(scene, cam)
    label_map = rng.integers(0, 4, (48, 48)).astype(np.uint32)
    obs = MaskObservation(0, 1, label_map, {1: 0, 2: 1, 3: 2})
    codebook = encode_labels(3, 16, 11)
    labeling = reproject(view, scene, cam, obs, codebook)
    ref = naive_composite(
        view.mean2d, view.inv_cov, view.opacity, view.gp_index, 48, 48, len(scene)
    )
    y_ref, den_ref = eq8_latents_from_contribs(ref["contribs"], label_map, codebook.rows, len(scene))
    seen = den_ref >= 1e-3
    assert np.allclose(labeling.latent[seen], y_ref[seen], atol=1e-6)
    assert np.array_equal(labeling.label[seen], eq9_argmax(y_ref[seen], codebook.rows))

    # Eq. 10: multi-view affinity.
    from superfield.hierarchy import multiview_affinity

    hu = [rng.uniform(0, 3, 5) for _ in range(4)]
    hv = [rng.uniform(0, 3, 5) for _ in range(4)]
    assert multiview_affinity(hu, hv, [True] * 4) == pytest.approx(
        eq10_affinity(hu, hv), abs=1e-9
    )

    # Eq. 11: semantic assignment vs direct recomputation (1e-6).
    from superfield.hierarchy import assign_features
    from superfield.types import MaskFeatureMatrix

    m, d, n_sp = 5, 8, 3
    fm = MaskFeatureMatrix(random_unit(rng, (m, d)).astype(np.float32))
    assignment = rng.integers(0, n_sp, n)
    rows = {t: t - 1 for t in range(1, m + 1)}
    observations11 = [
        MaskObservation(v, 2, np.arange(1, m + 1, dtype=np.uint32).reshape(1, -1), rows)
        for v in range(3)
    ]
    labelings11 = [
        GpLabeling(
            view_id=v, level=2, latent=np.zeros((n, 0)),
            label=rng.integers(0, m + 1, n).astype(np.uint32),
            confidence=np.ones(n), depth=np.full(n, 4.0), total_weight=np.ones(n),
        )
        for v in range(3)
    ]
    out, _, _ = assign_features(assignment, labelings11, observations11, fm, n_sp)
    for sp in range(n_sp):
        members = np.nonzero(assignment == sp)[0]
        expected = eq11_feature(
            members, [lb.label for lb in labelings11], [rows] * 3, fm.rows.astype(np.float64)
        )
        assert np.allclose(out[sp], expected, atol=1e-6)

    # Eq. 12: relevance.
    sp_feats = random_unit(rng, (30, 12))
    qry = random_unit(rng, (12,))
    canon = random_unit(rng, (4, 12))
    spec = QuerySpec(qry, canon)
    scores = relevance(sp_feats, spec)
    for i in range(sp_feats.shape[0]):
        assert scores[i] == pytest.approx(eq12_relevance(sp_feats[i], qry, canon), rel=1e-9)
    report(4, "Eq. 5/6/8/9/10/11/12 match independent evaluators")


def test_criterion_5_synthetic_end_to_end(full_fixture, full_field):
    hierarchy, timing, wall = full_field
    assert wall < 60.0, f"pipeline took {wall:.1f}s (budget 60s)"
    canon = canonical_embeddings(full_fixture.features)

    object_ious = []
    for obj in range(3):
        spec = QuerySpec(full_fixture.query_embedding(3, obj), canon, levels=(3,))
        result = query(hierarchy, spec)
        gt = set(full_fixture.gt_gp_set(3, obj).tolist())
        pred = set(result.gp_indices.tolist())
        object_ious.append(len(gt & pred) / len(gt | pred))
    assert min(object_ious) == 1.0, f"object-level IoUs {object_ious}"

    part_ious = []
    for part in range(6):
        spec = QuerySpec(full_fixture.query_embedding(2, part), canon, levels=(2,))
        result = query(hierarchy, spec)
        gt = set(full_fixture.gt_gp_set(2, part).tolist())
        pred = set(result.gp_indices.tolist())
        part_ious.append(len(gt & pred) / len(gt | pred))
    assert min(part_ious) >= 0.95, f"part-level IoUs {part_ious}"

    preds, gts = [], []
    for obj in range(3):
        spec = QuerySpec(full_fixture.query_embedding(3, obj), canon, levels=(3,))
        result = query(hierarchy, spec)
        for obs in full_fixture.observations[3]:
            view = ProjectedView(full_fixture.scene, full_fixture.cameras[obs.view_id])
            _, binary = render_presence(view, result.gp_indices)
            local = {r: t for t, r in obs.feature_row_of.items()}.get(
                full_fixture.row_of[(3, obj)], 0
            )
            preds.append(binary)
            gts.append(obs.label_map == local)
    miou, _ = evaluate_2d(preds, gts)
    assert miou >= 0.95, f"2D mIoU {miou}"
    report(
        5,
        f"object IoU 1.0, part IoU >= {min(part_ious):.3f}, 2D mIoU {miou:.3f}, build {wall:.1f}s",
    )


def test_criterion_6_ablation_trend():
    fixture = touching_clusters_fixture()
    gt = fixture.gt_entities[1]
    m_max = max(int(o.label_map.max(initial=0)) for o in fixture.observations[1])
    codebook = encode_labels(max(m_max, 1), 32, 0)
    labelings = []
    for obs in fixture.observations[1]:
        cam = fixture.cameras[obs.view_id]
        labelings.append(reproject(ProjectedView(fixture.scene, cam), fixture.scene, cam, obs, codebook))

    def label_accuracy(partition):
        correct = 0
        for c in range(partition.superpoint_count):
            members = partition.assignment == c
            _, counts = np.unique(gt[members], return_counts=True)
            correct += int(counts.max())
        return correct / gt.size

    guided, _ = partition_scene(fixture.scene, labelings=labelings, channels=("position",))
    unguided, _ = partition_scene(fixture.scene, channels=("position",))
    acc_with = label_accuracy(guided)
    acc_without = label_accuracy(unguided)
    assert acc_without < acc_with, (acc_with, acc_without)
    report(6, f"accuracy {acc_with:.4f} with reweighting vs {acc_without:.4f} without")


def test_criterion_7_codebook_bound():
    worst = 0.0
    for seed in range(100):
        codebook = encode_labels(1024, 64, seed)
        gram = np.abs(codebook.rows @ codebook.rows.T)
        np.fill_diagonal(gram, 0.0)
        worst = max(worst, float(gram.max()))
        assert gram.max() < 0.6, seed
    report(7, f"max |cos| over 100 seeds = {worst:.4f} < 0.6")


def test_criterion_8_determinism(tmp_path):
    fixture = three_objects_fixture(per_subpart=25, n_views=4)
    config = PipelineConfig(seed=123)
    digests = []
    for i in range(2):
        hierarchy, _ = build_field(
            fixture.scene, fixture.cameras, fixture.observations, fixture.features, config
        )
        path = tmp_path / f"run{i}.shf"
        export_hierarchy(hierarchy, path)
        digests.append(path.read_bytes())
    assert digests[0] == digests[1]
    report(8, f"two runs produced bit-identical fields ({len(digests[0])} bytes)")


def test_criterion_9_scale():
    from superfield.synthetic import large_fixture

    fixture = large_fixture(n_gp=100_000, n_views=20)
    assert len(fixture.scene) >= 99_000
    start = time.perf_counter()
    hierarchy, timing = build_field(
        fixture.scene, fixture.cameras, fixture.observations, fixture.features,
        PipelineConfig(),
    )
    wall = time.perf_counter() - start
    assert wall < 300.0, f"scale build took {wall:.1f}s (budget 300s)"
    assert set(timing.stages) == {"reproject", "partition", "merge"}
    assert all(secs > 0 for secs in timing.stages.values())
    report(
        9,
        f"{len(fixture.scene)} gps / 20 views built in {wall:.1f}s "
        + "(" + ", ".join(f"{k} {v:.1f}s" for k, v in timing.stages.items()) + ")",
    )


def test_criterion_10_hierarchy_invariants(full_fixture, full_field, small_fixture, small_field):
    def audit(fixture, hierarchy):
        hierarchy.validate()
        for q in (1, 2, 3):
            assert np.array_equal(
                hierarchy.parents[q][hierarchy.levels[q - 1]], hierarchy.levels[q]
            )
        counts = [hierarchy.count(q) for q in range(4)]
        assert all(a >= b for a, b in zip(counts, counts[1:]))
        # Superpoint connectivity over the adjacency graph at every level.
        graph = build_knn(fixture.scene.centroid.astype(np.float64), 10)
        edges = graph.edges
        for q in range(4):
            assignment = hierarchy.levels[q]
            for sp in range(hierarchy.count(q)):
                members = np.nonzero(assignment == sp)[0]
                if members.size == 1:
                    continue
                local = {int(g): i for i, g in enumerate(members)}
                adj = [[] for _ in members]
                mask = (assignment[edges[:, 0]] == sp) & (assignment[edges[:, 1]] == sp)
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
                assert seen.all(), (q, sp)

    audit(full_fixture, full_field[0])
    audit(small_fixture, small_field[0])
    report(10, "nesting, connectivity and parent totality hold on all fixtures")
