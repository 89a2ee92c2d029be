"""Command-line interface.

Exit codes: 0 ok, 2 domain error (bad sketch, blocked joint, ...),
3 I/O error. `predict` and the HTTP endpoint share one engine path, so
they produce byte-identical articulation JSON for identical inputs.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import complete, kinematics, meshops, pipeline, shapes, sketch
from .errors import DomainError
from .metrics import evaluate_states, report_to_csv, report_to_json
from .model import ArticulatedObject, ArticulationSpec, Part
from .render import Camera

EXIT_DOMAIN = 2
EXIT_IO = 3


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _read(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        _fail(EXIT_IO, f"cannot read {path}: {e}")


@click.group()
def main():
    """Sketch-based articulation modeling toolkit."""


@main.command()
@click.option("--mesh", "mesh_path", required=True, help="OBJ mesh file")
@click.option("--strokes", "strokes_path", required=True, help="stroke wire JSON")
@click.option("--camera", "camera_path", required=True, help="camera JSON")
@click.option("--features", "features_path", default=None, help="feature tensor block")
@click.option("--backend", default="geometric", type=click.Choice(["geometric", "neural"]))
@click.option("--adapter-command", default=None, help="neural adapter command line")
@click.option("--focal-rect", default=None, help="x,y,w,h focal rectangle")
@click.option("--out", "out_path", default="-", help="output articulation JSON (- = stdout)")
def predict(mesh_path, strokes_path, camera_path, features_path, backend,
            adapter_command, focal_rect, out_path):
    """Interpret strokes over a mesh into a snapped articulation."""
    try:
        mesh = meshops.load_mesh(_read(mesh_path))
        strokes = sketch.strokes_from_wire(json.loads(_read(strokes_path)))
        camera = Camera.from_json_dict(json.loads(_read(camera_path)))
        blob = _read(features_path) if features_path else None
        feats, tree = pipeline.build_features_and_tree(mesh, blob)
        adapter = None
        if backend == "neural":
            from .infer import AdapterConfig

            if not adapter_command:
                _fail(EXIT_DOMAIN, "--adapter-command required for the neural backend")
            adapter = AdapterConfig(command=tuple(adapter_command.split()))
        rect = tuple(float(x) for x in focal_rect.split(",")) if focal_rect else None
        outcome = pipeline.predict(
            mesh, strokes, camera, feats, tree, backend=backend,
            adapter=adapter, focal_rect=rect,
        )
    except DomainError as e:
        _fail(EXIT_DOMAIN, f"[{e.code}] {e}")
    except (json.JSONDecodeError, KeyError) as e:
        _fail(EXIT_IO, f"bad input file: {e}")
    text = outcome.to_json()
    if out_path == "-":
        click.echo(text)
    else:
        Path(out_path).write_text(text + "\n")


@main.command("export-urdf")
@click.option("--object", "object_path", required=True,
              help="object.json annotation (mesh + joints)")
@click.option("--urdf-out", "out_dir", required=True, help="output directory")
def export_urdf(object_path, out_dir):
    """Export an annotated articulated object as URDF + link OBJs."""
    try:
        obj = _load_object_json(object_path)
        base, movables = pipeline.split_object_meshes(obj)
        kinematics.export_urdf(base, movables, out_dir)
    except DomainError as e:
        _fail(EXIT_DOMAIN, f"[{e.code}] {e}")
    except OSError as e:
        _fail(EXIT_IO, str(e))
    click.echo(f"wrote {Path(out_dir) / 'model.urdf'}")


def _load_object_json(path: str) -> ArticulatedObject:
    doc = json.loads(_read(path))
    mesh = meshops.load_mesh(_read(str(Path(path).parent / doc["mesh"])))
    obj = ArticulatedObject(mesh, source_id=doc.get("source_id", ""))
    for j in doc.get("joints", []):
        obj.add_joint(
            Part.from_json_dict(j["part"]),
            ArticulationSpec.from_json_dict(j["articulation"]),
        )
    return obj


@main.command("synth-dataset")
@click.option("--out", "out_dir", required=True, help="output directory")
@click.option("--n", "n_samples", default=100, show_default=True)
@click.option("--seed", default=7, show_default=True)
@click.option("--resolution", default=256, show_default=True)
@click.option("--shapes", "n_shapes", default=21, show_default=True,
              help="number of demo shapes to synthesize from")
def synth_dataset(out_dir, n_samples, seed, resolution, n_shapes):
    """Emit deterministic training samples from the demo shapes."""
    from .dataset import generate_sample, write_object_annotation, write_sample

    try:
        objects = shapes.demo_objects(n_shapes)
        out = Path(out_dir)
        for i, obj in enumerate(objects):
            write_object_annotation(obj, out / "objects" / obj.source_id)
        count = 0
        i = 0
        while count < n_samples:
            obj = objects[i % len(objects)]
            sample_seed = seed + i
            i += 1
            try:
                sample = generate_sample(obj, 0, sample_seed, resolution=resolution)
            except DomainError:
                continue
            write_sample(sample, out / f"{obj.source_id}-s{sample_seed:05d}")
            count += 1
    except OSError as e:
        _fail(EXIT_IO, str(e))
    click.echo(f"wrote {count} samples under {out_dir}")


@main.command()
@click.option("--pred", "pred_path", required=True, help="predicted object.json")
@click.option("--gt", "gt_path", required=True, help="ground-truth object.json")
@click.option("--states", default=6, show_default=True)
@click.option("--points", default=100_000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--csv", "csv_out", default=None, help="also write a CSV table")
@click.option("--out", "out_path", default="-")
def eval(pred_path, gt_path, states, points, seed, csv_out, out_path):
    """Multi-state CD/F-score plus joint axis/pivot errors."""
    try:
        pred = _load_object_json(pred_path)
        gt = _load_object_json(gt_path)
        report = evaluate_states(pred, gt, n_states=states, n_points=points, seed=seed)
    except DomainError as e:
        _fail(EXIT_DOMAIN, f"[{e.code}] {e}")
    text = report_to_json(report)
    if out_path == "-":
        click.echo(text)
    else:
        Path(out_path).write_text(text + "\n")
    if csv_out:
        Path(csv_out).write_text(report_to_csv(report))


@main.command("complete")
@click.option("--object", "object_path", required=True, help="object.json with joints")
@click.option("--resolution", default=32, show_default=True)
@click.option("--steps", default=10, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--k-max", default=15, show_default=True)
@click.option("--backend", default="mock-linear",
              type=click.Choice(["mock-linear", "mock-noisy"]))
@click.option("--target", "target_path", default=None,
              help="target occupancy tensor block (defaults to the object's own solid voxelization)")
@click.option("--out", "out_path", required=True, help="output occupancy tensor block")
def complete_cmd(object_path, resolution, steps, seed, k_max, backend, target_path, out_path):
    """Masked flow completion of the object's interior (mock backends)."""
    try:
        obj = _load_object_json(object_path)
        shell = complete.voxelize(obj.mesh, None, resolution)
        if obj.joints:
            part, spec = obj.joints[-1]
            moving = complete.voxelize(obj.mesh, part, resolution)
        else:
            spec, moving = None, shell.with_data(np.zeros_like(shell.data))
        if target_path:
            target = complete.grid_from_tensor_block(_read(target_path))
        else:
            target = shell
        cls = complete.MockNoisyBackend if backend == "mock-noisy" else complete.MockLinearBackend
        backend_obj = cls(target)
        config = complete.CompletionConfig(steps=steps, seed=seed, k_max=k_max)
        result = complete.iterative_complete(shell, spec, moving, backend_obj, config)
        if spec is not None:
            sweep = kinematics.sweep_volume(moving, spec).grid
        else:
            sweep = moving
        pruned = complete.prune_strict(result.occupancy, shell, sweep)
        Path(out_path).write_bytes(complete.grid_to_tensor_block(pruned))
    except DomainError as e:
        _fail(EXIT_DOMAIN, f"[{e.code}] {e}")
    except OSError as e:
        _fail(EXIT_IO, str(e))
    click.echo(
        f"converged={result.converged} iterations={result.iterations} "
        f"cells={pruned.count()}"
    )


@main.command()
@click.option("--host", default=None, help="bind address [env SKETCHJOINT_BIND, default 127.0.0.1]")
@click.option("--port", default=8023, show_default=True)
@click.option("--workers", default=2, show_default=True, help="completion worker threads")
def serve(host, port, workers):
    """Run the HTTP service."""
    import os

    import uvicorn

    from .service import create_app

    bind = host or os.environ.get("SKETCHJOINT_BIND", "127.0.0.1")
    uvicorn.run(create_app(workers=workers), host=bind, port=port, log_level="warning")


if __name__ == "__main__":
    main()
