import numpy as np
import pytest

from superfield.query import (
    QuerySpec,
    evaluate_2d,
    evaluate_3d,
    load_embedding,
    query,
    relevance,
    save_embedding,
)
from superfield.synthetic import canonical_embeddings, random_unit
from superfield.types import ValidationError

from .oracles import confusion_metrics, eq12_relevance, pixel_loop_iou


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def spec_for(query_vec, canonicals, **kw):
    return QuerySpec(
        query_embedding=np.asarray(query_vec, dtype=np.float64),
        canonical_embeddings=np.asarray(canonicals, dtype=np.float64),
        **kw,
    )


class TestRelevance:
    def test_symmetric_dots_give_half(self):
        d = 8
        sp = unit(np.ones(d))
        spec = spec_for(sp, [sp])
        assert relevance(sp[None], spec)[0] == pytest.approx(0.5)

    def test_worst_margin_logistic(self):
        # Dots: query 2, canonicals {0, 5} -> logistic(2 - 5).
        sp = np.zeros(8)
        sp[0] = 1.0
        # Build embeddings with prescribed dot products against sp.
        qry = 2.0 * sp + 3.0 * np.eye(8)[1]
        canon0 = 0.0 * sp + np.eye(8)[2]
        canon1 = 5.0 * sp + np.eye(8)[3]
        spec = QuerySpec.__new__(QuerySpec)  # bypass normalization for raw dots
        spec.query_embedding = qry
        spec.canonical_embeddings = np.stack([canon0, canon1])
        spec.levels = (3,)
        spec.threshold = 0.5
        spec.top_k = None
        score = relevance(sp[None], spec)[0]
        assert score == pytest.approx(1.0 / (1.0 + np.exp(3.0)), rel=1e-12)
        assert score == pytest.approx(0.04742587317756678, rel=1e-9)

    def test_zero_feature_scores_zero(self):
        spec = spec_for(np.eye(4)[0], [np.eye(4)[1]])
        feats = np.zeros((2, 4))
        feats[1, 0] = 1.0
        scores = relevance(feats, spec)
        assert scores[0] == 0.0
        assert scores[1] > 0.5

    def test_matches_formula_oracle(self, rng):
        d = 16
        feats = random_unit(rng, (20, d))
        qry = random_unit(rng, (d,))
        canon = random_unit(rng, (4, d))
        spec = spec_for(qry, canon)
        scores = relevance(feats, spec)
        for i in range(20):
            assert scores[i] == pytest.approx(
                eq12_relevance(feats[i], qry, canon), rel=1e-12
            )

    def test_monotone_in_query_dot(self):
        # Canonical dots stay fixed (features live in an orthogonal plane).
        canon = np.eye(4)[2:4]
        spec = spec_for(np.eye(4)[0], canon)
        alphas = np.linspace(-0.9, 0.9, 7)
        feats = np.stack([[a, np.sqrt(1 - a * a), 0.0, 0.0] for a in alphas])
        scores = relevance(feats, spec)
        assert np.all(np.diff(scores) > 0)

    def test_invariant_to_canonical_permutation(self, rng):
        feats = random_unit(rng, (5, 8))
        qry = random_unit(rng, (8,))
        canon = random_unit(rng, (4, 8))
        s1 = relevance(feats, spec_for(qry, canon))
        s2 = relevance(feats, spec_for(qry, canon[::-1]))
        assert np.allclose(s1, s2, atol=0)

    def test_requires_canonicals(self):
        with pytest.raises(ValidationError):
            spec_for(np.eye(3)[0], np.zeros((0, 3)))


class TestQuery:
    def test_one_hot_selects_exact_object(self, small_fixture, small_field):
        hierarchy, _ = small_field
        canon = canonical_embeddings(small_fixture.features)
        for obj in range(3):
            spec = spec_for(
                small_fixture.query_embedding(3, obj), canon, levels=(3,)
            )
            result = query(hierarchy, spec)
            gt = set(small_fixture.gt_gp_set(3, obj).tolist())
            pred = set(result.gp_indices.tolist())
            assert pred == gt
            assert result.selected[3].size == 1

    def test_orthogonal_query_falls_back_to_argmax(self, small_fixture, small_field):
        hierarchy, _ = small_field
        d = small_fixture.features.d_sem
        # Orthogonal to every superpoint feature and every canonical.
        qry = np.zeros(d)
        qry[d - 1] = 1.0
        canon = np.zeros((2, d))
        canon[0, d - 2] = 1.0
        canon[1, d - 3] = 1.0
        spec = spec_for(qry, canon, levels=(3,))
        result = query(hierarchy, spec)
        assert np.allclose(result.scores[3], 0.5)
        assert result.selected[3].tolist() == [0]  # lowest id wins the tie

    def test_multi_level_parent_consistency(self, small_fixture, small_field):
        hierarchy, _ = small_field
        canon = canonical_embeddings(small_fixture.features)
        part_spec = spec_for(small_fixture.query_embedding(2, 2), canon, levels=(2,))
        part_result = query(hierarchy, part_spec)
        obj_spec = spec_for(small_fixture.query_embedding(3, 1), canon, levels=(3,))
        obj_result = query(hierarchy, obj_spec)
        # Part 2 belongs to object 1: its selected S2 superpoint's parent is
        # the S3 superpoint the object query selects.
        part_sp = int(part_result.selected[2][0])
        parent = int(hierarchy.parents[3][part_sp])
        assert parent in obj_result.selected[3].tolist()

    def test_multi_level_union(self, small_fixture, small_field):
        hierarchy, _ = small_field
        canon = canonical_embeddings(small_fixture.features)
        spec = spec_for(
            small_fixture.query_embedding(3, 0), canon, levels=(2, 3)
        )
        result = query(hierarchy, spec)
        assert set(result.scores) == {2, 3}
        only3 = query(hierarchy, spec_for(small_fixture.query_embedding(3, 0), canon, levels=(3,)))
        assert set(only3.gp_indices).issubset(set(result.gp_indices))

    def test_top_k_selection(self, small_fixture, small_field):
        hierarchy, _ = small_field
        canon = canonical_embeddings(small_fixture.features)
        spec = spec_for(
            small_fixture.query_embedding(3, 0), canon, levels=(3,), top_k=2
        )
        result = query(hierarchy, spec)
        assert result.selected[3].size == 2

    def test_empty_levels_rejected(self, small_fixture):
        with pytest.raises(ValidationError):
            spec_for(
                small_fixture.query_embedding(3, 0),
                canonical_embeddings(small_fixture.features),
                levels=(),
            )


class TestEvaluate2d:
    def test_identical_masks(self):
        mask = np.zeros((10, 10), dtype=bool)
        mask[2:7, 3:8] = True
        miou, macc = evaluate_2d([mask], [mask])
        assert miou == 1.0
        assert macc == 1.0

    def test_half_overlap_squares(self):
        a = np.zeros((20, 20), dtype=bool)
        b = np.zeros((20, 20), dtype=bool)
        a[0:10, 0:10] = True
        b[0:10, 5:15] = True
        miou, _ = evaluate_2d([a], [b])
        assert miou == pytest.approx(50 / 150)

    def test_resolution_mismatch(self):
        with pytest.raises(ValidationError):
            evaluate_2d([np.zeros((4, 4), bool)], [np.zeros((5, 5), bool)])

    def test_matches_pixel_loop(self, rng):
        for _ in range(10):
            a = rng.random((12, 9)) > 0.5
            b = rng.random((12, 9)) > 0.5
            miou, _ = evaluate_2d([a], [b])
            assert miou == pytest.approx(pixel_loop_iou(a, b), abs=0)

    def test_iou_symmetry(self, rng):
        a = rng.random((16, 16)) > 0.6
        b = rng.random((16, 16)) > 0.4
        assert evaluate_2d([a], [b])[0] == evaluate_2d([b], [a])[0]


class TestEvaluate3d:
    def test_identical(self):
        labels = np.array([0, 1, 2, 1, 0])
        miou, macc = evaluate_3d(labels, labels)
        assert miou == 1.0
        assert macc == 1.0

    def test_disjoint(self):
        pred = np.zeros(6, dtype=int)
        gt = np.ones(6, dtype=int)
        miou, macc = evaluate_3d(pred, gt)
        assert miou == 0.0
        assert macc == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            evaluate_3d(np.zeros(3), np.zeros(4))

    def test_matches_confusion_oracle(self, rng):
        pred = rng.integers(0, 3, 200)
        gt = rng.integers(0, 3, 200)
        miou, macc = evaluate_3d(pred, gt)
        exp_iou, exp_acc = confusion_metrics(pred, gt, [0, 1, 2])
        assert miou == pytest.approx(exp_iou, abs=1e-12)
        assert macc == pytest.approx(exp_acc, abs=1e-12)

    def test_class_subset(self, rng):
        pred = rng.integers(0, 4, 100)
        gt = rng.integers(0, 4, 100)
        miou, macc = evaluate_3d(pred, gt, class_subset=[1, 2])
        exp_iou, exp_acc = confusion_metrics(pred, gt, [1, 2])
        assert miou == pytest.approx(exp_iou, abs=1e-12)
        assert macc == pytest.approx(exp_acc, abs=1e-12)


class TestEmbeddingFile:
    def test_round_trip(self, tmp_path, rng):
        vec = random_unit(rng, (17,))
        path = tmp_path / "q.vec"
        save_embedding(vec, path)
        loaded = load_embedding(path)
        assert np.allclose(loaded, vec, atol=1e-7)
