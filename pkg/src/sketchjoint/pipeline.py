"""Shared engine path for the authoring loop; the HTTP service and the CLI
both call these functions so identical inputs give identical outputs."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import infer, model, segment, sketch
from .errors import InvalidInputError
from .infer import AdapterConfig, RawPrediction
from .model import ArticulatedObject, ArticulationSpec, Mesh, Part
from .render import Camera, GBuffer, focal_crop, render_gbuffer
from .segment import ClusterTree, FeatureField
from .sketch import Stroke

FOCAL_EXPAND = 0.2  # focal rectangle grows 20% before cropping


@dataclass
class PredictOutcome:
    part: Part
    node_id: int
    iou: float
    spec: ArticulationSpec
    continuity: str | None
    snapped: bool
    prediction: RawPrediction = field(repr=False, default=None)
    gbuffer: GBuffer = field(repr=False, default=None)
    camera: Camera = None

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "part": self.part.to_json_dict(),
            "node_id": int(self.node_id),
            "articulation": self.spec.to_json_dict(),
            "diagnostics": {
                "iou": float(self.iou),
                "continuity": self.continuity,
                "snapped": bool(self.snapped),
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)


def expand_rect(rect, width: int, height: int, factor: float = FOCAL_EXPAND):
    x, y, w, h = (float(v) for v in rect)
    dx, dy = w * factor / 2.0, h * factor / 2.0
    return (x - dx, y - dy, w + 2 * dx, h + 2 * dy)


def _strokes_to_crop(strokes, rect, camera) -> list[Stroke]:
    """Full-frame stroke pixels -> cropped-camera pixels.

    focal_crop expands the rect to the image aspect about its center, so the
    mapping must mirror that expansion before scaling.
    """
    x, y, w, h = rect
    aspect = camera.width / camera.height
    if w / h < aspect:
        new_w = h * aspect
        x -= (new_w - w) / 2.0
        w = new_w
    elif w / h > aspect:
        new_h = w / aspect
        y -= (new_h - h) / 2.0
        h = new_h
    s = w / camera.width
    out = []
    for stroke in strokes:
        pts = (stroke.points - np.array([x, y])) / s
        out.append(Stroke(pts, role=stroke.role))
    return out


def predict(
    mesh: Mesh,
    strokes: list[Stroke],
    camera: Camera,
    feats: FeatureField,
    tree: ClusterTree,
    backend: str = "geometric",
    adapter: AdapterConfig | None = None,
    focal_rect=None,
    gbuffer: GBuffer | None = None,
) -> PredictOutcome:
    """Strokes -> intent -> raw prediction -> part selection -> snapped
    articulation.

    A focal rect (full-frame pixels, like the strokes) narrows the working
    camera by 20%-expanded crop; strokes are remapped into the cropped
    frame so the whole chain, selection included, runs in that view.
    """
    work_camera = camera
    if focal_rect is not None:
        rect = expand_rect(focal_rect, camera.width, camera.height)
        work_camera = focal_crop(camera, rect)
        strokes = _strokes_to_crop(strokes, rect, camera)
    if gbuffer is None or work_camera is not camera:
        gbuffer = render_gbuffer(mesh, work_camera)

    intent = sketch.classify_strokes(strokes)
    if backend == "geometric":
        prediction = infer.geometric_predict(gbuffer, work_camera, intent, feats)
    elif backend == "neural":
        if adapter is None:
            raise InvalidInputError("neural backend requires an adapter config")
        sketch_channel = sketch.rasterize_strokes(
            strokes, work_camera.width, work_camera.height
        )
        prediction = infer.neural_predict(gbuffer, sketch_channel, adapter)
    else:
        raise InvalidInputError(f"unknown backend {backend!r}")

    selection = segment.select_part(tree, prediction.mask2d, gbuffer)
    result = infer.finalize(
        intent, prediction, selection["part"], mesh, gbuffer, work_camera
    )
    return PredictOutcome(
        part=selection["part"],
        node_id=selection["node_id"],
        iou=selection["iou"],
        spec=result.spec,
        continuity=result.continuity,
        snapped=result.snapped,
        prediction=prediction,
        gbuffer=gbuffer,
        camera=work_camera,
    )


def build_features_and_tree(
    mesh: Mesh, feature_blob: bytes | None = None, n_leaves: int = 200
) -> tuple[FeatureField, ClusterTree]:
    """Imported features win over the built-in descriptor when provided."""
    if feature_blob is not None:
        feats = segment.load_feature_field(feature_blob, mesh)
    else:
        feats = segment.builtin_features(mesh)
    tree = segment.build_cluster_tree(mesh, feats, n_leaves=n_leaves)
    return feats, tree


def split_object_meshes(obj: ArticulatedObject) -> tuple[Mesh, list[tuple[Mesh, ArticulationSpec]]]:
    """Base mesh (faces not in any joint part) plus per-joint part meshes,
    all sharing the original vertex buffer and denorm transform."""
    taken = np.zeros(obj.mesh.n_faces, dtype=bool)
    movables = []
    for part, spec in obj.joints:
        taken[part.face_ids] = True
        movables.append(
            (
                Mesh(
                    obj.mesh.vertices,
                    obj.mesh.faces[part.face_ids],
                    denorm_scale=obj.mesh.denorm_scale,
                    denorm_offset=obj.mesh.denorm_offset,
                ),
                spec,
            )
        )
    base_faces = np.nonzero(~taken)[0]
    if len(base_faces) == 0:
        raise InvalidInputError("no static base faces remain")
    base = Mesh(
        obj.mesh.vertices,
        obj.mesh.faces[base_faces],
        denorm_scale=obj.mesh.denorm_scale,
        denorm_offset=obj.mesh.denorm_offset,
    )
    return base, movables
