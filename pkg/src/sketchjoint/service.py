"""HTTP service exposing the authoring loop to the companion UI.

Sessions are in-memory and single-writer: concurrent mutations on one
session are rejected with 409 rather than queued. Completion jobs run on a
bounded worker pool and report per-iteration growth; they can be canceled
and resumed from the last committed iteration.
"""

from __future__ import annotations

import base64
import io
import json
import os
import threading
import uuid
import zipfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, Response

from . import complete, kinematics, meshops, model, pipeline, render, shapes, sketch
from .errors import DomainError, InvalidInputError
from .infer import AdapterConfig
from .model import ArticulatedObject
from .render import Camera

MAX_UNDO = 64

DEMO_MAKERS = {
    "cabinet": shapes.make_cabinet,
    "fridge": shapes.make_fridge,
    "wheel_cart": shapes.make_wheel_cart,
    "double_cabinet": shapes.make_double_cabinet,
}


@dataclass
class Session:
    session_id: str
    obj: ArticulatedObject
    lock: threading.Lock = field(default_factory=threading.Lock)
    feats: Any = None
    tree: Any = None
    warmup: Any = None
    camera: Camera | None = None
    gbuffer: Any = None
    strokes: list = field(default_factory=list)
    focal_rect: tuple | None = None
    last_outcome: Any = None
    undo_stack: list = field(default_factory=list)
    completion: Any = None

    def require_tree(self):
        if self.warmup is not None:
            self.feats, self.tree = self.warmup.result()
            self.warmup = None
        return self.feats, self.tree

    def snapshot(self):
        self.undo_stack.append(list(self.obj.joints))
        if len(self.undo_stack) > MAX_UNDO:
            self.undo_stack.pop(0)


@dataclass
class Job:
    job_id: str
    session_id: str
    status: str = "pending"  # pending|running|done|failed|canceled
    progress: list = field(default_factory=list)
    result: Any = None
    error: str | None = None
    cancel_flag: bool = False
    params: dict = field(default_factory=dict)
    last_state: Any = None


def create_app(workers: int | None = None) -> FastAPI:
    app = FastAPI(title="sketchjoint", version="0.1.0")
    sessions: dict[str, Session] = {}
    jobs: dict[str, Job] = {}
    n_workers = workers or int(os.environ.get("SKETCHJOINT_WORKERS", "2"))
    pool = ThreadPoolExecutor(max_workers=n_workers)
    adapter_cmd = os.environ.get("SKETCHJOINT_ADAPTER_CMD")
    adapter_timeout = float(os.environ.get("SKETCHJOINT_TIMEOUT", "30"))

    @app.exception_handler(DomainError)
    async def domain_error_handler(request: Request, exc: DomainError):
        return JSONResponse(
            status_code=422,
            content={"code": exc.code, "message": str(exc), "details": _safe(exc.details)},
        )

    def get_session(session_id: str) -> Session:
        s = sessions.get(session_id)
        if s is None:
            raise _http404(f"unknown session {session_id}")
        return s

    class _NotFound(Exception):
        def __init__(self, message):
            self.message = message

    def _http404(message):
        return _NotFound(message)

    @app.exception_handler(_NotFound)
    async def not_found_handler(request: Request, exc: _NotFound):
        return JSONResponse(status_code=404, content={"code": "not-found", "message": exc.message})

    class _Busy(Exception):
        pass

    @app.exception_handler(_Busy)
    async def busy_handler(request: Request, exc: _Busy):
        return JSONResponse(
            status_code=409,
            content={"code": "session-busy", "message": "concurrent mutation rejected"},
        )

    def locked(session: Session):
        class _Ctx:
            def __enter__(self_inner):
                if not session.lock.acquire(blocking=False):
                    raise _Busy()
                return session

            def __exit__(self_inner, *exc):
                session.lock.release()

        return _Ctx()

    app.state.sessions = sessions
    app.state.jobs = jobs

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "schema_version": 1}

    # ------------------------------------------------------------------
    # Sessions

    @app.post("/sessions")
    def create_session(body: dict):
        obj = _load_object(body)
        session = Session(session_id=uuid.uuid4().hex[:12], obj=obj)
        feature_blob = None
        if body.get("features_base64"):
            feature_blob = base64.b64decode(body["features_base64"])
        if body.get("semantic_features") and obj.joints:
            feats = shapes.semantic_features(obj)
            session.warmup = pool.submit(
                lambda: (feats, __import__("sketchjoint.segment", fromlist=["x"]).build_cluster_tree(obj.mesh, feats))
            )
        else:
            session.warmup = pool.submit(
                pipeline.build_features_and_tree, obj.mesh, feature_blob
            )
        sessions[session.session_id] = session
        return {"session_id": session.session_id, "n_faces": obj.mesh.n_faces,
                "n_joints": len(obj.joints), "schema_version": 1}

    def _load_object(body: dict) -> ArticulatedObject:
        if body.get("demo"):
            maker = DEMO_MAKERS.get(body["demo"])
            if maker is None:
                raise InvalidInputError(f"unknown demo shape {body['demo']!r}")
            obj = maker()
            if not body.get("keep_joints", False):
                obj = ArticulatedObject(obj.mesh, source_id=obj.source_id, category=obj.category)
            return obj
        if body.get("obj_text"):
            mesh = meshops.load_mesh(body["obj_text"])
        elif body.get("obj_base64"):
            mesh = meshops.load_mesh(base64.b64decode(body["obj_base64"]))
        elif body.get("path"):
            with open(body["path"], "rb") as f:
                mesh = meshops.load_mesh(f.read())
        else:
            raise InvalidInputError("provide demo, obj_text, obj_base64, or path")
        return ArticulatedObject(mesh, source_id=body.get("source_id", "upload"))

    @app.get("/sessions/{session_id}")
    def session_info(session_id: str):
        s = get_session(session_id)
        return {
            "session_id": s.session_id,
            "n_faces": s.obj.mesh.n_faces,
            "joints": [
                {"part": p.to_json_dict(), "articulation": spec.to_json_dict()}
                for p, spec in s.obj.joints
            ],
            "camera": s.camera.to_json_dict() if s.camera else None,
            "schema_version": 1,
        }

    @app.get("/sessions/{session_id}/render")
    def render_view(session_id: str, camera: str = Query(...), fmt: str = "json"):
        s = get_session(session_id)
        cam = Camera.from_json_dict(json.loads(camera))
        gb = render.render_gbuffer(s.obj.mesh, cam)
        with locked(s):
            s.camera = cam
            s.gbuffer = gb
        png = render.shaded_png(gb)
        if fmt == "png":
            return Response(content=png, media_type="image/png")
        fg = gb.foreground()
        bbox = None
        if fg.any():
            ys, xs = np.nonzero(fg)
            bbox = [int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())]
        return {
            "png_base64": base64.b64encode(png).decode(),
            "width": cam.width,
            "height": cam.height,
            "foreground_bbox": bbox,
            "schema_version": 1,
        }

    @app.post("/sessions/{session_id}/strokes")
    def post_strokes(session_id: str, body: dict):
        s = get_session(session_id)
        strokes = sketch.strokes_from_wire(
            body, image_size=(s.camera.width, s.camera.height) if s.camera else None
        )
        with locked(s):
            s.strokes = strokes
            s.focal_rect = tuple(body["focal_rect"]) if body.get("focal_rect") else None
        return {"stored": len(strokes), "schema_version": 1}

    @app.post("/sessions/{session_id}/predict")
    def predict(session_id: str, body: dict | None = None):
        body = body or {}
        s = get_session(session_id)
        if s.camera is None or s.gbuffer is None:
            raise InvalidInputError("render a view before predicting")
        if not s.strokes:
            raise InvalidInputError("post strokes before predicting")
        feats, tree = s.require_tree()
        backend = body.get("backend", "geometric")
        adapter = None
        if backend == "neural":
            cmd = body.get("adapter_command") or adapter_cmd
            url = body.get("adapter_url")
            adapter = AdapterConfig(
                command=tuple(cmd.split()) if isinstance(cmd, str) else cmd,
                url=url,
                timeout_s=adapter_timeout,
            )
        with locked(s):
            outcome = pipeline.predict(
                s.obj.mesh, s.strokes, s.camera, feats, tree,
                backend=backend, adapter=adapter,
                focal_rect=s.focal_rect, gbuffer=s.gbuffer if s.focal_rect is None else None,
            )
            s.last_outcome = outcome
        doc = outcome.to_json_dict()
        fg = outcome.gbuffer.foreground()
        part_mask = np.zeros(outcome.gbuffer.shape, dtype=bool)
        lut = np.zeros(int(outcome.gbuffer.face_id.max()) + 1, dtype=bool)
        valid = outcome.part.face_ids[outcome.part.face_ids <= outcome.gbuffer.face_id.max()]
        lut[valid] = True
        part_mask[fg] = lut[outcome.gbuffer.face_id[fg]]
        doc["diagnostics"]["part_mask_png_base64"] = base64.b64encode(
            render.mask_png(part_mask)
        ).decode()
        return doc

    @app.post("/sessions/{session_id}/joints")
    def commit_joint(session_id: str, body: dict | None = None):
        body = body or {}
        s = get_session(session_id)
        if s.last_outcome is None:
            raise InvalidInputError("nothing predicted to commit")
        with locked(s):
            s.snapshot()
            spec = s.last_outcome.spec
            if body.get("range_max") is not None:
                rng = float(body["range_max"])
                if spec.continuous and abs(rng - 2 * np.pi) > 1e-9:
                    raise InvalidInputError("continuous joints have a fixed 2*pi range")
                spec = spec.with_range(rng)
            part = s.last_outcome.part
            calibrated = False
            if spec.motion_type == model.TRANSLATION and not body.get("skip_calibration"):
                spec = _calibrate_translation(s.obj, part, spec)
                calibrated = True
            s.obj.add_joint(part, spec)
            s.last_outcome = None
        return {
            "n_joints": len(s.obj.joints),
            "range_max": float(spec.range_max),
            "calibrated": calibrated,
            "schema_version": 1,
        }

    def _component_faces(mesh, part) -> np.ndarray:
        """Faces of every connected component the part touches: a facade
        selection drags its whole drawer along."""
        labels = meshops.connected_components(mesh)
        moving_labels = np.unique(labels[part.face_ids])
        return np.nonzero(np.isin(labels, moving_labels))[0]

    def _calibrate_translation(obj, part, spec, resolution: int = 48):
        """Clamp a drawer-style range against static obstacles; a part that
        cannot leave its rest pose surfaces as blocked-joint."""
        moving_faces = _component_faces(obj.mesh, part)
        static_faces = np.setdiff1d(np.arange(obj.mesh.n_faces), moving_faces)
        if len(static_faces) == 0:
            return spec
        moving = complete.voxelize(obj.mesh, model.Part(moving_faces), resolution)
        static = complete.voxelize(obj.mesh, model.Part(static_faces), resolution)
        return kinematics.calibrate_range(spec, moving, static, samples=64)

    @app.get("/sessions/{session_id}/node-at")
    def node_at(session_id: str, x: int, y: int):
        """Cluster nodes under a pixel, smallest first: the click-to-adjust
        lookup the UI uses to pick node ids for add/remove."""
        s = get_session(session_id)
        if s.gbuffer is None:
            raise InvalidInputError("render a view first")
        H, W = s.gbuffer.shape
        if not (0 <= x < W and 0 <= y < H):
            raise InvalidInputError("pixel outside the image")
        face = int(s.gbuffer.face_id[y, x])
        if face < 0:
            raise InvalidInputError("background pixel")
        _, tree = s.require_tree()
        chain = [
            {"node_id": int(n.node_id), "n_faces": int(len(n.face_ids))}
            for n in sorted(tree.nodes, key=lambda n: len(n.face_ids))
            if face in set(int(i) for i in n.face_ids)
        ]
        return {"face_id": face, "nodes": chain[:8], "schema_version": 1}

    @app.post("/sessions/{session_id}/joints/{joint_index}/adjust")
    def adjust_joint(session_id: str, joint_index: int, body: dict):
        s = get_session(session_id)
        feats, tree = s.require_tree()
        if not 0 <= joint_index < len(s.obj.joints):
            raise _http404(f"joint {joint_index} does not exist")
        from .segment import adjust_part

        with locked(s):
            s.snapshot()
            part, spec = s.obj.joints[joint_index]
            if body.get("add") or body.get("remove"):
                part = adjust_part(part, body.get("add", []), body.get("remove", []), tree)
            if body.get("range_max") is not None:
                spec = spec.with_range(float(body["range_max"]))
            rest = [j for i, j in enumerate(s.obj.joints) if i != joint_index]
            rebuilt = ArticulatedObject(
                s.obj.mesh, source_id=s.obj.source_id, category=s.obj.category
            )
            for p, sp in rest[:joint_index]:
                rebuilt.add_joint(p, sp)
            rebuilt.add_joint(part, spec)
            for p, sp in rest[joint_index:]:
                rebuilt.add_joint(p, sp)
            s.obj = rebuilt
        return {"joint": joint_index, "n_faces": len(part), "schema_version": 1}

    @app.post("/sessions/{session_id}/undo")
    def undo(session_id: str):
        s = get_session(session_id)
        with locked(s):
            if not s.undo_stack:
                raise InvalidInputError("nothing to undo")
            joints = s.undo_stack.pop()
            rebuilt = ArticulatedObject(
                s.obj.mesh, source_id=s.obj.source_id, category=s.obj.category
            )
            for p, sp in joints:
                rebuilt.add_joint(p, sp)
            s.obj = rebuilt
        return {"n_joints": len(s.obj.joints), "schema_version": 1}

    @app.get("/sessions/{session_id}/animate")
    def animate(session_id: str, joint: int = 0, value: float = 0.0):
        s = get_session(session_id)
        if not 0 <= joint < len(s.obj.joints):
            raise _http404(f"joint {joint} does not exist")
        if s.camera is None:
            raise InvalidInputError("render a view first")
        part, spec = s.obj.joints[joint]
        v = min(max(value, 0.0), spec.range_max)
        verts = s.obj.mesh.vertices.copy()
        vertex_ids = np.unique(s.obj.mesh.faces[part.face_ids])
        verts[vertex_ids] = model.apply_articulation(spec, v, verts[vertex_ids])
        moved = model.Mesh(verts, s.obj.mesh.faces)
        gb = render.render_gbuffer(moved, s.camera)
        return Response(content=render.shaded_png(gb), media_type="image/png",
                        headers={"X-Joint-Value": f"{v:.9g}"})

    # ------------------------------------------------------------------
    # Completion jobs

    @app.post("/sessions/{session_id}/complete")
    def start_completion(session_id: str, body: dict | None = None):
        body = body or {}
        s = get_session(session_id)
        job = Job(job_id=uuid.uuid4().hex[:12], session_id=session_id, params=body)
        jobs[job.job_id] = job
        pool.submit(_run_completion, s, job)
        return {"job_id": job.job_id, "schema_version": 1}

    def _run_completion(s: Session, job: Job, resume_from=None):
        job.status = "running"
        try:
            p = job.params
            res_n = int(p.get("resolution", 32))
            config = complete.CompletionConfig(
                steps=int(p.get("steps", 10)),
                seed=int(p.get("seed", 0)),
                k_max=int(p.get("k_max", 15)),
            )
            original_shell = complete.voxelize(s.obj.mesh, None, res_n)
            shell = resume_from if resume_from is not None else original_shell
            if s.obj.joints:
                part, spec = s.obj.joints[-1]
                # the moving unit is the part's whole connected component
                moving_faces = _component_faces(s.obj.mesh, part)
                moving = complete.voxelize(
                    s.obj.mesh, model.Part(moving_faces), res_n
                )
                static_faces = np.setdiff1d(
                    np.arange(s.obj.mesh.n_faces), moving_faces
                )
                static_shell = (
                    complete.voxelize(s.obj.mesh, model.Part(static_faces), res_n)
                    if len(static_faces)
                    else shell.with_data(np.zeros_like(shell.data))
                )
                sweep = kinematics.sweep_volume(moving, spec).grid
            else:
                spec = None
                moving = shell.with_data(np.zeros_like(shell.data))
                static_shell = original_shell
                sweep = moving
            backend_name = p.get("backend", "mock-linear")
            target = _completion_target(s, res_n, p)
            if backend_name == "mock-noisy":
                backend = complete.MockNoisyBackend(target, seed=config.seed)
            elif backend_name == "mock-linear":
                backend = complete.MockLinearBackend(target)
            else:
                raise InvalidInputError(f"unknown completion backend {backend_name!r}")
            condition = base64.b64decode(p["condition_base64"]) if p.get("condition_base64") else None

            def on_iteration(k, grown, grid):
                job.progress.append({"iteration": k, "grown_cells": int(grown)})
                job.last_state = grid

            result = complete.iterative_complete(
                shell, spec, moving, backend, config, condition,
                cancel=lambda: job.cancel_flag,
                on_iteration=on_iteration,
            )
            if job.cancel_flag:
                job.status = "canceled"
                return
            # generate-then-prune: clamp to the strict (un-eroded) envelope
            pruned = complete.prune_strict(result.occupancy, original_shell, sweep)
            with locked(s):
                s.completion = {
                    "occupancy": pruned,
                    "static_shell": static_shell,
                    "moving": moving,
                    "spec": spec,
                }
            job.result = {
                "converged": result.converged,
                "iterations": result.iterations,
                "growth_per_iteration": result.growth_per_iteration,
                "pruned_cells": int(result.occupancy.count() - pruned.count()),
                "occupancy_base64": base64.b64encode(
                    complete.grid_to_tensor_block(pruned)
                ).decode(),
            }
            job.last_state = pruned
            job.status = "done"
        except Exception as e:  # job errors surface through GET /jobs
            job.status = "failed"
            job.error = f"{type(e).__name__}: {e}"

    def _completion_target(s: Session, res_n: int, params: dict):
        if params.get("target_base64"):
            return complete.grid_from_tensor_block(base64.b64decode(params["target_base64"]))
        # default mock target: the object's own solid voxelization
        return complete.voxelize(s.obj.mesh, None, res_n)

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            raise _http404(f"unknown job {job_id}")
        return {
            "job_id": job.job_id,
            "status": job.status,
            "progress": job.progress,
            "result": job.result,
            "error": job.error,
            "schema_version": 1,
        }

    @app.post("/jobs/{job_id}/cancel")
    def cancel_job(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            raise _http404(f"unknown job {job_id}")
        job.cancel_flag = True
        if job.status in ("pending", "running"):
            job.status = "canceled"
        return {"status": job.status}

    @app.post("/jobs/{job_id}/resume")
    def resume_job(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            raise _http404(f"unknown job {job_id}")
        if job.status != "canceled" or job.last_state is None:
            raise InvalidInputError("job is not resumable")
        s = get_session(job.session_id)
        job.cancel_flag = False
        job.status = "pending"
        pool.submit(_run_completion, s, job, job.last_state)
        return {"status": "pending"}

    # ------------------------------------------------------------------
    # Export

    @app.get("/sessions/{session_id}/export/urdf")
    def export_urdf_zip(session_id: str, source: str = "mesh"):
        """Zip of model.urdf + link OBJs.

        source=mesh exports the authored mesh parts; source=completion
        decouples the completed voxel grids, extracts iso-surfaces, and
        recalibrates the joint range on the synthesized geometry.
        """
        s = get_session(session_id)
        if not s.obj.joints:
            raise InvalidInputError("no joints committed")
        if source == "completion":
            base, movables = _completion_assembly(s)
        elif source == "mesh":
            base, movables = pipeline.split_object_meshes(s.obj)
        else:
            raise InvalidInputError(f"unknown export source {source!r}")
        import tempfile
        from pathlib import Path

        buf = io.BytesIO()
        with tempfile.TemporaryDirectory() as tmp:
            kinematics.export_urdf(base, movables, tmp)
            with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
                for f in sorted(Path(tmp).iterdir()):
                    zf.writestr(f.name, f.read_bytes())
        return Response(
            content=buf.getvalue(),
            media_type="application/zip",
            headers={"Content-Disposition": 'attachment; filename="model_urdf.zip"'},
        )

    def _completion_assembly(s: Session):
        """Decouple the completed occupancy and extract URDF-ready meshes."""
        if not s.completion:
            raise InvalidInputError("no finished completion job for this session")
        c = s.completion
        spec = c["spec"]
        if spec is None:
            raise InvalidInputError("completion ran without a joint")
        final = c["occupancy"]
        seed_grid = final.with_data(c["moving"].data & final.data)
        if not seed_grid.data.any():
            raise InvalidInputError("moving part vanished from the completed grid")
        split = kinematics.decouple_components(final, c["static_shell"], seed_grid)
        spec = kinematics.calibrate_range(
            spec, split["moving"], split["static"], samples=64
        ) if not spec.continuous else spec
        denorm = dict(
            denorm_scale=s.obj.mesh.denorm_scale,
            denorm_offset=s.obj.mesh.denorm_offset,
        )
        static_mesh = kinematics.extract_mesh(split["static"])
        moving_mesh = kinematics.extract_mesh(split["moving"])
        base = model.Mesh(static_mesh.vertices, static_mesh.faces, **denorm)
        mover = model.Mesh(moving_mesh.vertices, moving_mesh.faces, **denorm)
        return base, [(mover, spec)]

    return app


def _safe(obj):
    try:
        json.dumps(obj)
        return obj
    except (TypeError, ValueError):
        return str(obj)


app = create_app()
