from __future__ import annotations

import numpy as np
import pytest

from superfield.pipeline import PipelineConfig, build_field
from superfield.synthetic import three_objects_fixture


@pytest.fixture(scope="session")
def small_fixture():
    """Compact 3-objects scene shared by unit tests (12 sub-parts, 6 views)."""
    return three_objects_fixture(per_subpart=30, n_views=6)


@pytest.fixture(scope="session")
def small_field(small_fixture):
    hierarchy, report = build_field(
        small_fixture.scene,
        small_fixture.cameras,
        small_fixture.observations,
        small_fixture.features,
        PipelineConfig(),
    )
    return hierarchy, report


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def random_scene(rng: np.random.Generator, n: int, box: float = 3.0):
    """Unstructured random scene for rasterizer/graph tests."""
    from superfield.synthetic import random_unit
    from superfield.types import GaussianScene

    return GaussianScene(
        rng.uniform(-box, box, (n, 3)).astype(np.float32),
        random_unit(rng, (n, 4)).astype(np.float32),
        rng.uniform(0.05, 0.3, (n, 3)).astype(np.float32),
        rng.uniform(0.2, 1.0, n).astype(np.float32),
        rng.uniform(0, 1, (n, 3)).astype(np.float32),
        random_unit(rng, (n, 3)).astype(np.float32),
    )
