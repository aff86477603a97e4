"""Command-line interface.

Paths default to conventional names under SUPERFIELD_DATA_DIR when set:
scene.ply, cameras.json, masks/, features.bin, field.shf.
"""

from __future__ import annotations

import os
import sys
from pathlib import Path
from typing import Optional, Tuple

import click
import numpy as np

from . import KERNEL_BACKEND
from .graph import build_weighted_graph, load_graph, save_graph
from .labels import encode_labels, reproject as reproject_view, save_labeling, load_labeling
from .partition import cut_pursuit, reweight, save_partition, load_partition_assignment
from .pipeline import PipelineConfig, build_field_from_dir
from .query import QuerySpec, load_embedding, query as run_query
from .render import ProjectedView, render_presence
from .scene_io import (
    export_hierarchy,
    import_hierarchy,
    list_mask_views,
    load_cameras,
    load_features,
    load_masks,
    load_scene,
    write_pgm16,
)

DATA_DIR_ENV = "SUPERFIELD_DATA_DIR"

_DEFAULT_NAMES = {
    "scene": "scene.ply",
    "cameras": "cameras.json",
    "masks": "masks",
    "features": "features.bin",
    "field": "field.shf",
}


def _default_path(kind: str) -> Optional[str]:
    root = os.environ.get(DATA_DIR_ENV)
    if root is None:
        return None
    return str(Path(root) / _DEFAULT_NAMES[kind])


def _require(value: Optional[str], kind: str, flag: str) -> str:
    value = value or _default_path(kind)
    if value is None:
        raise click.UsageError(f"{flag} is required (or set {DATA_DIR_ENV})")
    return value


@click.group()
@click.version_option()
def main() -> None:
    """Hierarchical open-vocabulary semantic fields over Gaussian splats."""


@main.command()
@click.option("--scene", type=str, default=None, help="Scene .ply file.")
@click.option("--cameras", type=str, default=None, help="Cameras .json file.")
@click.option("--masks", type=str, default=None, help="Mask directory with manifest.")
@click.option("--features", type=str, default=None, help="Mask feature matrix .bin.")
@click.option("--out", type=str, default=None, help="Output field file (.shf).")
@click.option("--config", "config_path", type=str, default=None, help="Pipeline config JSON.")
@click.option(
    "--ablate",
    type=click.Choice(["reweight", "decay", "instance-only", "progressive"]),
    multiple=True,
    help="Disable a pipeline stage (study variants).",
)
@click.option("--seed", type=int, default=None, help="Override the config seed.")
def build(scene, cameras, masks, features, out, config_path, ablate, seed) -> None:
    """Build the hierarchical semantic field end to end."""
    config = PipelineConfig.from_json(config_path) if config_path else PipelineConfig()
    if "reweight" in ablate:
        config.reweight_enabled = False
    if "decay" in ablate:
        config.depth_decay_enabled = False
    if "instance-only" in ablate:
        config.hierarchy_mode = "instance_only"
    if "progressive" in ablate:
        config.hierarchy_mode = "independent"
    if seed is not None:
        config.seed = seed
    hierarchy, report = build_field_from_dir(
        _require(scene, "scene", "--scene"),
        _require(cameras, "cameras", "--cameras"),
        _require(masks, "masks", "--masks"),
        _require(features, "features", "--features"),
        out_path=_require(out, "field", "--out"),
        config=config,
    )
    click.echo(f"kernel backend: {KERNEL_BACKEND}")
    click.echo("stage timings:")
    click.echo(report.format())
    counts = ", ".join(f"S{q}={hierarchy.count(q)}" for q in range(4))
    click.echo(f"superpoints: {counts}")


@main.command()
@click.option("--scene", type=str, default=None)
@click.option("-k", "knn_k", type=int, default=10, show_default=True)
@click.option("--channels", type=str, default="pos,color,normal", show_default=True)
@click.option("--out", type=str, required=True)
def graph(scene, knn_k, channels, out) -> None:
    """Build the weighted KNN adjacency graph and dump it."""
    names = {"pos": "position", "color": "color", "normal": "normal"}
    try:
        selected = tuple(names[c.strip()] for c in channels.split(",") if c.strip())
    except KeyError as exc:
        raise click.UsageError(f"unknown channel {exc.args[0]!r}; use pos,color,normal")
    g = build_weighted_graph(load_scene(_require(scene, "scene", "--scene")), knn_k, selected)
    save_graph(g, out)
    click.echo(f"graph: {g.node_count} nodes, {g.edges.shape[0]} edges -> {out}")


@main.command("reproject")
@click.option("--scene", type=str, default=None)
@click.option("--cameras", type=str, default=None)
@click.option("--masks", type=str, default=None)
@click.option("--level", type=int, default=1, show_default=True)
@click.option("--latent-dim", type=int, default=32, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=str, required=True, help="Output directory for labelings.")
def reproject_cmd(scene, cameras, masks, level, latent_dim, seed, out) -> None:
    """Reproject one mask level onto primitives; dump per-view labelings."""
    scene_data = load_scene(_require(scene, "scene", "--scene"))
    cams = load_cameras(_require(cameras, "cameras", "--cameras"))
    masks_dir = _require(masks, "masks", "--masks")
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    views = list_mask_views(masks_dir)
    observations = []
    for view_id in views:
        cam = cams[view_id]
        observations.append(load_masks(masks_dir, view_id, level, (cam.height, cam.width)))
    m_max = max((o.mask_count for o in observations), default=0)
    codebook = encode_labels(max(m_max, 1), latent_dim, seed)
    for obs in observations:
        cam = cams[obs.view_id]
        labeling = reproject_view(
            ProjectedView(scene_data, cam), scene_data, cam, obs, codebook
        )
        save_labeling(labeling, out_dir / f"view{obs.view_id:04d}_level{level}.labels")
    click.echo(f"wrote {len(observations)} labelings to {out_dir}")


@main.command("partition")
@click.option("--graph", "graph_path", type=str, required=True)
@click.option("--labels", "labels_dir", type=str, default=None, help="Labeling dump directory.")
@click.option("--lambda", "lam", type=float, default=0.5, show_default=True)
@click.option("--delta-plus", type=float, default=0.5, show_default=True)
@click.option("--delta-minus", type=float, default=0.5, show_default=True)
@click.option("--out", type=str, required=True)
def partition_cmd(graph_path, labels_dir, lam, delta_plus, delta_minus, out) -> None:
    """Run cut pursuit on a dumped graph (optionally mask-reweighted)."""
    g = load_graph(graph_path)
    if labels_dir:
        labelings = [load_labeling(p) for p in sorted(Path(labels_dir).glob("*.labels"))]
        g = reweight(g, labelings, delta_plus=delta_plus, delta_minus=delta_minus)
    part = cut_pursuit(g, lam)
    save_partition(part, out)
    click.echo(f"partition: {part.superpoint_count} superpoints, energy {part.energy:.6g} -> {out}")


@main.command("merge")
@click.option("--s0", "s0_path", type=str, required=True)
@click.option("--scene", type=str, default=None)
@click.option("--cameras", type=str, default=None)
@click.option("--masks", type=str, default=None)
@click.option("--features", type=str, default=None)
@click.option("--tau", type=float, default=0.9, show_default=True)
@click.option("--out", type=str, default=None)
def merge_cmd(s0_path, scene, cameras, masks, features, tau, out) -> None:
    """Merge a level-0 partition into the full hierarchy and export it."""
    from .hierarchy import build_hierarchy
    from .graph import build_knn
    from .labels import encode_labels

    scene_data = load_scene(_require(scene, "scene", "--scene"))
    cams = load_cameras(_require(cameras, "cameras", "--cameras"))
    masks_dir = _require(masks, "masks", "--masks")
    feats = load_features(_require(features, "features", "--features"))
    assignment = load_partition_assignment(s0_path)
    if assignment.shape[0] != len(scene_data):
        raise click.UsageError(
            f"partition covers {assignment.shape[0]} gps, scene has {len(scene_data)}"
        )
    observations = {1: [], 2: [], 3: []}
    for view_id in list_mask_views(masks_dir):
        cam = cams[view_id]
        for level in (1, 2, 3):
            observations[level].append(
                load_masks(masks_dir, view_id, level, (cam.height, cam.width))
            )
    m_max = max(o.mask_count for lvl in observations.values() for o in lvl)
    codebook = encode_labels(max(m_max, 1), 32, 0)
    labelings = {1: [], 2: [], 3: []}
    for view_id in sorted(cams):
        view = ProjectedView(scene_data, cams[view_id])
        for level in (1, 2, 3):
            obs = next(o for o in observations[level] if o.view_id == view_id)
            labelings[level].append(
                reproject_view(view, scene_data, cams[view_id], obs, codebook)
            )
    g = build_knn(scene_data.centroid.astype(np.float64), 10) if len(scene_data) > 1 else None
    edges = g.edges if g is not None else np.zeros((0, 2), dtype=np.int32)
    hierarchy = build_hierarchy(
        assignment, edges, labelings, observations, feats, tau={1: tau, 2: tau, 3: tau}
    )
    export_hierarchy(hierarchy, _require(out, "field", "--out"))
    counts = ", ".join(f"S{q}={hierarchy.count(q)}" for q in range(4))
    click.echo(f"merged hierarchy: {counts}")


@main.command("render-presence")
@click.option("--field", type=str, default=None)
@click.option("--scene", type=str, default=None)
@click.option("--cameras", type=str, default=None)
@click.option("--ids", "ids_path", type=str, required=True, help="Text file, one gp id per line.")
@click.option("--view", type=int, required=True)
@click.option("--out", type=str, required=True)
@click.option("--binary/--soft", default=False, show_default=True)
def render_presence_cmd(field, scene, cameras, ids_path, view, out, binary) -> None:
    """Rasterize a presence mask for a primitive id set (16-bit PGM)."""
    scene_data = load_scene(_require(scene, "scene", "--scene"))
    cams = load_cameras(_require(cameras, "cameras", "--cameras"))
    if view not in cams:
        raise click.UsageError(f"view {view} not in cameras file")
    ids = np.array(
        [int(line) for line in Path(ids_path).read_text().split()], dtype=np.int64
    )
    soft, hard = render_presence(ProjectedView(scene_data, cams[view]), ids)
    if binary:
        write_pgm16(out, hard.astype(np.uint16) * 65535)
    else:
        write_pgm16(out, np.clip(soft * 65535.0, 0, 65535).astype(np.uint16))
    click.echo(f"wrote {out}")


@main.command("query")
@click.option("--field", type=str, default=None)
@click.option("--embedding", "embedding_path", type=str, required=True)
@click.option("--canonical", "canonical_paths", type=str, multiple=True, required=True)
@click.option("--levels", type=str, default="3", show_default=True)
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--top-k", type=int, default=None)
@click.option("--render-view", type=int, default=None)
@click.option("--scene", type=str, default=None)
@click.option("--cameras", type=str, default=None)
@click.option("--out", type=str, default=None, help="Rendered binary mask (PGM).")
def query_cmd(
    field, embedding_path, canonical_paths, levels, threshold, top_k,
    render_view, scene, cameras, out,
) -> None:
    """Query the field with an embedding vector."""
    hierarchy = import_hierarchy(_require(field, "field", "--field"))
    spec = QuerySpec(
        query_embedding=load_embedding(embedding_path),
        canonical_embeddings=np.stack([load_embedding(p) for p in canonical_paths]),
        levels=tuple(int(x) for x in levels.split(",") if x),
        threshold=threshold,
        top_k=top_k,
    )
    result = run_query(hierarchy, spec)
    for level in sorted(result.selected):
        chosen = result.selected[level]
        shown = ", ".join(
            f"{int(i)}:{result.scores[level][i]:.3f}" for i in chosen[:8]
        )
        click.echo(f"level {level}: {chosen.size} superpoints selected ({shown})")
    click.echo(f"selected gps: {result.gp_indices.size}")
    if render_view is not None:
        scene_data = load_scene(_require(scene, "scene", "--scene"))
        cams = load_cameras(_require(cameras, "cameras", "--cameras"))
        if render_view not in cams:
            raise click.UsageError(f"view {render_view} not in cameras file")
        if out is None:
            raise click.UsageError("--out is required with --render-view")
        _, hard = render_presence(
            ProjectedView(scene_data, cams[render_view]), result.gp_indices
        )
        write_pgm16(out, hard.astype(np.uint16) * 65535)
        click.echo(f"wrote {out}")


@main.command("serve")
@click.option("--field", type=str, default=None)
@click.option("--scene", type=str, default=None)
@click.option("--cameras", type=str, default=None, help="Optional; enables pixel picks and renders.")
@click.option("--bind", type=str, default="127.0.0.1:8080", show_default=True)
@click.option("--embedder", type=str, default=None, help="External text-embedding endpoint URL.")
def serve_cmd(field, scene, cameras, bind, embedder) -> None:
    """Serve the field over HTTP for interactive exploration."""
    import uvicorn

    from .service import FieldBundle, create_app

    bundle = FieldBundle.load(
        _require(field, "field", "--field"),
        _require(scene, "scene", "--scene"),
        cameras or _default_path("cameras"),
    )
    app = create_app(bundle, embedder_url=embedder)
    host, _, port = bind.partition(":")
    click.echo(f"serving on http://{bind} (backend: {KERNEL_BACKEND})")
    uvicorn.run(app, host=host, port=int(port or 8080), log_level="warning")


if __name__ == "__main__":
    sys.exit(main())
