import numpy as np
import pytest

from superfield.pipeline import (
    PipelineConfig,
    StageError,
    build_field,
    build_field_from_dir,
)
from superfield.scene_io import export_hierarchy
from superfield.synthetic import (
    cluster_scene,
    look_at_camera,
    masks_from_entities,
    one_hot_features,
    three_objects_fixture,
)
from superfield.types import ValidationError


def minimal_fixture(rng):
    """1 view, 10 gps, one mask level replicated to all three."""
    scene, cluster = cluster_scene(np.array([[0.0, 0, 0]]), 10, spread=0.4, rng=rng)
    cam = look_at_camera((0, 0, 6.0), (0, 0, 0), width=64, height=64, focal=60.0)
    row_of = {(lv, 0): 0 for lv in (1, 2, 3)}
    observations = masks_from_entities(
        scene, {0: cam}, {1: cluster, 2: cluster, 3: cluster}, row_of
    )
    return scene, {0: cam}, observations, one_hot_features(1)


class TestBuildField:
    def test_minimal_smoke(self, rng):
        scene, cameras, observations, features = minimal_fixture(rng)
        hierarchy, report = build_field(scene, cameras, observations, features)
        assert 1 <= hierarchy.count(0) <= 10
        hierarchy.validate()
        assert set(report.stages) == {"reproject", "partition", "merge"}
        assert report.total > 0

    def test_missing_level_raises_stage_error(self, rng):
        scene, cameras, observations, features = minimal_fixture(rng)
        del observations[2]
        observations[2] = []
        with pytest.raises(StageError, match="reproject"):
            build_field(scene, cameras, observations, features)

    def test_missing_camera_raises(self, rng):
        scene, cameras, observations, features = minimal_fixture(rng)
        with pytest.raises(StageError, match="reproject"):
            build_field(scene, {}, observations, features)

    def test_deterministic_exports(self, tmp_path, rng):
        scene, cameras, observations, features = minimal_fixture(rng)
        config = PipelineConfig(seed=42)
        paths = []
        for i in range(2):
            hierarchy, _ = build_field(scene, cameras, observations, features, config)
            path = tmp_path / f"field{i}.shf"
            export_hierarchy(hierarchy, path)
            paths.append(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_ablation_flags(self, rng):
        scene, cameras, observations, features = minimal_fixture(rng)
        for kwargs in (
            {"reweight_enabled": False},
            {"depth_decay_enabled": False},
            {"hierarchy_mode": "instance_only"},
            {"hierarchy_mode": "independent"},
        ):
            hierarchy, _ = build_field(
                scene, cameras, observations, features, PipelineConfig(**kwargs)
            )
            assert hierarchy.count(3) >= 1

    def test_file_pipeline(self, tmp_path):
        fixture = three_objects_fixture(per_subpart=12, n_views=3)
        paths = fixture.write(tmp_path)
        out = tmp_path / "field.shf"
        hierarchy, report = build_field_from_dir(
            paths["scene"], paths["cameras"], paths["masks"], paths["features"],
            out_path=out,
        )
        assert out.exists()
        assert "load" in report.stages and "export" in report.stages
        from superfield.scene_io import import_hierarchy

        loaded = import_hierarchy(out)
        assert loaded.n_gp == len(fixture.scene)


class TestConfig:
    def test_json_round_trip(self, tmp_path):
        config = PipelineConfig(knn_k=7, cp_lambda=0.25, merge_tau={1: 0.8, 2: 0.85, 3: 0.9})
        path = tmp_path / "config.json"
        config.to_json(path)
        loaded = PipelineConfig.from_json(path)
        assert loaded == config

    def test_validation(self):
        with pytest.raises(ValidationError):
            PipelineConfig(knn_k=0).validate()
        with pytest.raises(ValidationError):
            PipelineConfig(merge_tau={1: 1.5, 2: 0.9, 3: 0.9}).validate()
        with pytest.raises(ValidationError):
            PipelineConfig(hierarchy_mode="bogus").validate()
        with pytest.raises(ValidationError):
            PipelineConfig(latent_dim=1).validate()
