"""Build the explorer integration fixture: field + scene + expectations.

Writes scene.ply / cameras.json / field.shf plus expected.json (ground
truth the integration spec asserts against) into the directory given as
argv[1].
"""

import json
import sys
from pathlib import Path

import numpy as np

from superfield.pipeline import PipelineConfig, build_field
from superfield.scene_io import export_hierarchy, save_cameras, save_scene
from superfield.synthetic import canonical_embeddings, three_objects_fixture


def main() -> None:
    out_dir = Path(sys.argv[1])
    out_dir.mkdir(parents=True, exist_ok=True)
    fixture = three_objects_fixture(per_subpart=30, n_views=6)
    hierarchy, _ = build_field(
        fixture.scene, fixture.cameras, fixture.observations, fixture.features,
        PipelineConfig(),
    )
    save_scene(fixture.scene, out_dir / "scene.ply")
    save_cameras(fixture.cameras, out_dir / "cameras.json")
    export_hierarchy(hierarchy, out_dir / "field.shf")

    # "Object 2" = the middle object (1-based index 2 of 3).
    obj = 1
    gt_members = np.sort(fixture.gt_gp_set(3, obj))
    s3_id = int(np.unique(hierarchy.levels[3][gt_members])[0])
    s3_members = np.sort(np.nonzero(hierarchy.levels[3] == s3_id)[0])
    expected = {
        "gp_count": len(fixture.scene),
        "pick_gp": int(gt_members[0]),
        "object_s3_members": s3_members.tolist(),
        "query_embedding": fixture.query_embedding(3, obj).tolist(),
        "canonicals": canonical_embeddings(fixture.features).tolist(),
    }
    (out_dir / "expected.json").write_text(json.dumps(expected))
    print(out_dir)


if __name__ == "__main__":
    main()
