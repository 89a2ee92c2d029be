"""Four-head articulation prediction and geometric post-processing.

Backends produce a RawPrediction (movable-pixel mask, pivot heatmap, motion
type logits, 3D direction); finalize() then applies the snapping rules:
continuity classification against the part's representative normal, OBB
face-normal snapping for translations and continuous rotations, and
hinge-boundary alignment for bounded rotations.
"""

from __future__ import annotations

import logging
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import meshops, model, sketch
from .errors import (
    AdapterError,
    DegenerateGeometryError,
    InvalidInputError,
    NoSurfaceError,
)
from .meshops import OrientedBoundingBox, fit_obb, part_boundary, representative_normal
from .model import ArticulationSpec, Mesh, Part, default_range, unit
from .render import Camera, GBuffer, read_tensor_block, write_tensor_block
from .segment import FeatureField
from .sketch import SketchIntent, lift_arrow, lift_hinge

log = logging.getLogger(__name__)

CONTINUITY_ANGLE = np.deg2rad(30.0)
TYPE_LOGIT_SCALE = 10.0


@dataclass(frozen=True)
class RawPrediction:
    """Per-pixel movable mask and pivot heatmap, motion-type logits
    (translation, rotation), and a unit direction in camera space."""

    mask2d: np.ndarray
    pivot_heatmap: np.ndarray
    type_logits: np.ndarray
    dir3: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask2d, dtype=np.float64)
        heat = np.asarray(self.pivot_heatmap, dtype=np.float64)
        if mask.shape != heat.shape:
            raise InvalidInputError("mask and heatmap shapes differ")
        logits = np.asarray(self.type_logits, dtype=np.float64).reshape(-1)
        if logits.shape != (2,):
            raise InvalidInputError("type_logits must have 2 entries")
        d = np.asarray(self.dir3, dtype=np.float64).reshape(-1)
        n = float(np.linalg.norm(d))
        if n < 1e-9:
            raise InvalidInputError("dir3 must be non-zero")
        if abs(n - 1.0) > 1e-6:
            log.warning("renormalizing dir3 with |dir3|=%.6f", n)
        object.__setattr__(self, "mask2d", mask)
        object.__setattr__(self, "pivot_heatmap", heat)
        object.__setattr__(self, "type_logits", logits)
        object.__setattr__(self, "dir3", d / n)

    @property
    def motion_type(self) -> str:
        return model.ROTATION if self.type_logits[1] > self.type_logits[0] else model.TRANSLATION


@dataclass(frozen=True)
class GeometricConfig:
    """Geometric backend tuning; tau_feat_factor scales the median pairwise
    feature distance of the visible faces."""

    tau_feat_factor: float = 0.35
    ridge_sigma_px: float = 3.0
    max_tau_sample: int = 512


# ---------------------------------------------------------------------------
# Geometric backend


def geometric_predict(
    gbuffer: GBuffer,
    camera: Camera,
    intent: SketchIntent,
    feats: FeatureField,
    config: GeometricConfig = GeometricConfig(),
) -> RawPrediction:
    """Deterministic stand-in for the trained predictor.

    The movable mask grows over the face-id map from the arrow-tail seed
    face, admitting faces whose feature distance to the running mean stays
    under tau; the pivot heatmap is a Gaussian ridge along the hinge line.
    """
    lifted = lift_arrow(intent.arrow, gbuffer, camera)
    seed_face = int(gbuffer.face_id[lifted["tail_px"][1], lifted["tail_px"][0]])
    if seed_face < 0:
        raise NoSurfaceError("arrow tail did not resolve to a face")

    accepted = _grow_faces(gbuffer, feats, seed_face, config)
    fg = gbuffer.foreground()
    mask = np.zeros(gbuffer.shape, dtype=np.float64)
    accept_lut = np.zeros(int(gbuffer.face_id.max()) + 1, dtype=bool)
    accept_lut[list(accepted)] = True
    mask[fg] = accept_lut[gbuffer.face_id[fg]].astype(np.float64)

    if intent.kind == "rotation" and intent.hinge is not None:
        heat = _gaussian_ridge(
            gbuffer.shape, intent.hinge.p0, intent.hinge.p1, config.ridge_sigma_px
        )
        logits = np.array([-TYPE_LOGIT_SCALE, TYPE_LOGIT_SCALE])
    else:
        heat = np.zeros(gbuffer.shape, dtype=np.float64)
        logits = np.array([TYPE_LOGIT_SCALE, -TYPE_LOGIT_SCALE])
    return RawPrediction(mask, heat, logits, lifted["dir3"])


def _grow_faces(gbuffer, feats, seed_face, config) -> set[int]:
    """Best-first region growth over face-id map adjacency."""
    adjacency = _image_face_adjacency(gbuffer.face_id)
    values = feats.values
    tau = config.tau_feat_factor * _median_pairwise(
        values, sorted(adjacency), config.max_tau_sample
    )
    accepted = {seed_face}
    mean = values[seed_face].copy()
    import heapq

    heap: list[tuple[float, int]] = []
    visited = {seed_face}

    def push_neighbors(f):
        for g in sorted(adjacency.get(f, ())):
            if g not in visited:
                visited.add(g)
                heapq.heappush(heap, (float(np.linalg.norm(values[g] - mean)), g))

    push_neighbors(seed_face)
    while heap:
        dist, f = heapq.heappop(heap)
        # distances were computed against an older mean; re-check
        current = float(np.linalg.norm(values[f] - mean))
        if current > tau:
            continue
        accepted.add(f)
        mean += (values[f] - mean) / len(accepted)
        push_neighbors(f)
    return accepted


def _image_face_adjacency(face_id: np.ndarray) -> dict[int, set[int]]:
    """Face adjacency induced by 4-neighbor pixels in the rendered view."""
    adj: dict[int, set[int]] = {}
    a, b = face_id[:, :-1], face_id[:, 1:]
    pairs = np.stack([a.ravel(), b.ravel()], axis=1)
    c, d = face_id[:-1, :], face_id[1:, :]
    pairs = np.vstack([pairs, np.stack([c.ravel(), d.ravel()], axis=1)])
    pairs = pairs[(pairs[:, 0] >= 0) & (pairs[:, 1] >= 0)]
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    for u, v in np.unique(pairs, axis=0):
        adj.setdefault(int(u), set()).add(int(v))
        adj.setdefault(int(v), set()).add(int(u))
    # make sure isolated visible faces exist in the map
    for f in np.unique(face_id):
        if f >= 0:
            adj.setdefault(int(f), set())
    return adj


def _median_pairwise(values, face_ids, max_sample) -> float:
    ids = list(face_ids)[:max_sample]
    if len(ids) < 2:
        return 1.0
    v = values[ids]
    d = np.linalg.norm(v[:, None, :] - v[None, :, :], axis=2)
    upper = d[np.triu_indices(len(ids), k=1)]
    med = float(np.median(upper))
    return med if med > 0 else 1.0


def _gaussian_ridge(shape, p0, p1, sigma) -> np.ndarray:
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w]
    px = np.stack([xs + 0.5, ys + 0.5], axis=-1).astype(np.float64)
    a = np.asarray(p0, dtype=np.float64)
    b = np.asarray(p1, dtype=np.float64)
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-12:
        d2 = ((px - a) ** 2).sum(axis=-1)
    else:
        t = np.clip(((px - a) @ ab) / denom, 0.0, 1.0)
        proj = a + t[..., None] * ab
        d2 = ((px - proj) ** 2).sum(axis=-1)
    return np.exp(-d2 / (2.0 * sigma * sigma))


# ---------------------------------------------------------------------------
# Neural adapter (external process or HTTP endpoint)


@dataclass(frozen=True)
class AdapterConfig:
    command: tuple[str, ...] | None = None   # invoked as: cmd... input output
    url: str | None = None                   # or POST the block here
    timeout_s: float = 30.0


def build_adapter_input(gbuffer: GBuffer, sketch_channel: np.ndarray) -> bytes:
    """5-channel block (sketch, min-max normalized depth, normal xyz); the
    depth normalization is recorded in the header meta."""
    if sketch_channel.shape != gbuffer.shape:
        raise InvalidInputError("sketch channel shape mismatch")
    fg = gbuffer.foreground()
    depth = gbuffer.depth
    if fg.any():
        lo, hi = float(depth[fg].min()), float(depth[fg].max())
    else:
        lo, hi = 0.0, 1.0
    span = hi - lo if hi > lo else 1.0
    depth_norm = np.where(fg, (depth - lo) / span, 0.0)
    stack = np.stack(
        [
            np.asarray(sketch_channel, dtype=np.float32),
            depth_norm.astype(np.float32),
            gbuffer.normal[..., 0].astype(np.float32),
            gbuffer.normal[..., 1].astype(np.float32),
            gbuffer.normal[..., 2].astype(np.float32),
        ]
    )
    meta = {
        "channels": ["sketch", "depth", "nx", "ny", "nz"],
        "depth_min": lo,
        "depth_max": hi,
        "sketch_width_px": 2.0,
    }
    return write_tensor_block(stack, meta)


def parse_adapter_response(data: bytes, shape: tuple[int, int]) -> RawPrediction:
    """Response: tensor block [2, H, W] (mask, heatmap) whose meta carries
    type_logits and dir3."""
    arr, meta = read_tensor_block(data)
    if arr.ndim != 3 or arr.shape[0] != 2 or arr.shape[1:] != shape:
        raise AdapterError(f"expected [2, {shape[0]}, {shape[1]}] response, got {list(arr.shape)}")
    try:
        logits = np.asarray(meta["type_logits"], dtype=np.float64)
        dir3 = np.asarray(meta["dir3"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as e:
        raise AdapterError(f"missing/invalid meta fields: {e}")
    if np.linalg.norm(dir3) < 1e-9:
        raise AdapterError("adapter returned a zero direction")
    return RawPrediction(
        arr[0].astype(np.float64), arr[1].astype(np.float64), logits, dir3
    )


def neural_predict(
    gbuffer: GBuffer, sketch_channel: np.ndarray, adapter: AdapterConfig
) -> RawPrediction:
    """Run the external predictor over the 5-channel block."""
    payload = build_adapter_input(gbuffer, sketch_channel)
    if adapter.command:
        with tempfile.TemporaryDirectory(prefix="sketchjoint-adapter-") as tmp:
            inp = Path(tmp) / "input.tnsr"
            out = Path(tmp) / "output.tnsr"
            inp.write_bytes(payload)
            try:
                proc = subprocess.run(
                    [*adapter.command, str(inp), str(out)],
                    timeout=adapter.timeout_s,
                    capture_output=True,
                )
            except subprocess.TimeoutExpired:
                raise AdapterError(f"adapter timed out after {adapter.timeout_s}s")
            if proc.returncode != 0:
                raise AdapterError(
                    f"adapter exited {proc.returncode}: {proc.stderr[-500:].decode(errors='replace')}"
                )
            if not out.exists():
                raise AdapterError("adapter produced no output file")
            data = out.read_bytes()
    elif adapter.url:
        import urllib.request

        req = urllib.request.Request(
            adapter.url, data=payload, headers={"Content-Type": "application/octet-stream"}
        )
        try:
            with urllib.request.urlopen(req, timeout=adapter.timeout_s) as resp:
                if resp.status != 200:
                    raise AdapterError(f"adapter HTTP {resp.status}")
                data = resp.read()
        except OSError as e:
            raise AdapterError(f"adapter request failed: {e}")
    else:
        raise InvalidInputError("adapter config needs a command or url")
    return parse_adapter_response(data, gbuffer.shape)


# ---------------------------------------------------------------------------
# Post-processing (snapping)


def extract_pivot(heatmap: np.ndarray, gbuffer: GBuffer, camera: Camera) -> np.ndarray:
    """Weighted centroid of the heatmap's high-probability pixels, snapped
    to the nearest foreground pixel, back-projected to world space."""
    heat = np.asarray(heatmap, dtype=np.float64)
    peak = float(heat.max())
    if peak <= 0.1:
        raise DegenerateGeometryError(f"heatmap peak {peak:.3f} too low")
    sel = heat >= 0.5 * peak
    ys, xs = np.nonzero(sel)
    w = heat[sel]
    cx = float((xs * w).sum() / w.sum())
    cy = float((ys * w).sum() / w.sum())
    px = (int(round(cx)), int(round(cy)))
    H, W = gbuffer.shape
    inside = 0 <= px[0] < W and 0 <= px[1] < H
    if not inside or gbuffer.face_id[px[1], px[0]] < 0:
        snapped = sketch.nearest_foreground(gbuffer, (cx, cy), max_dist=max(H, W))
        if snapped is None:
            raise NoSurfaceError("no foreground pixel near the heatmap centroid")
        px = snapped
    return sketch.backproject(px, gbuffer, camera)


def classify_continuity(
    mesh: Mesh, part: Part, dir3_world: np.ndarray, view_dir: np.ndarray
) -> str:
    """continuous iff the axis estimate is within 30 deg of the part's
    representative normal (sign-agnostic; strictly inside the bound, tested
    in the cosine domain so the exact-30-degree case stays non-continuous)."""
    n = representative_normal(mesh, part, view_dir)
    d = unit(np.asarray(dir3_world, dtype=np.float64))
    cos_angle = abs(float(n @ d))
    return "continuous" if cos_angle > np.cos(CONTINUITY_ANGLE) else "non_continuous"


def snap_direction(dir3_world: np.ndarray, obb: OrientedBoundingBox) -> np.ndarray:
    """Snap to the best of the six OBB face normals (max dot product;
    candidate order +a0,-a0,+a1,-a1,+a2,-a2 breaks exact ties)."""
    d = unit(np.asarray(dir3_world, dtype=np.float64))
    candidates = np.vstack([sign * obb.axes[i] for i in range(3) for sign in (1.0, -1.0)])
    dots = candidates @ d
    return candidates[int(np.argmax(dots))].copy()


def snap_hinge(
    mesh: Mesh, part: Part, pivot_pred: np.ndarray, axis_hint: np.ndarray
) -> dict:
    """Align the axis with the boundary chain nearest the predicted pivot.

    Returns {pivot, axis, snapped}; when the part is floating (no shared
    boundary), the inputs pass through with snapped=False.
    """
    loops = part_boundary(mesh, part)
    pivot_pred = np.asarray(pivot_pred, dtype=np.float64)
    axis_hint = unit(np.asarray(axis_hint, dtype=np.float64))
    if not loops:
        return {"pivot": pivot_pred, "axis": axis_hint, "snapped": False}
    best = min(loops, key=lambda l: _chain_distance(mesh, l, pivot_pred))
    axis = best.tangent.copy()
    if float(axis @ axis_hint) < 0:
        axis = -axis
    base = best.line_point()
    pivot = base + float((pivot_pred - base) @ axis) * axis
    return {"pivot": pivot, "axis": axis, "snapped": True}


def _chain_distance(mesh: Mesh, loop, point: np.ndarray) -> float:
    """Min distance from point to the loop's edge segments."""
    best = np.inf
    for u, v in loop.edges:
        a, b = mesh.vertices[u], mesh.vertices[v]
        ab = b - a
        denom = float(ab @ ab)
        t = 0.0 if denom < 1e-18 else float(np.clip((point - a) @ ab / denom, 0.0, 1.0))
        best = min(best, float(np.linalg.norm(a + t * ab - point)))
    return best


# ---------------------------------------------------------------------------
# Finalization


@dataclass
class FinalizeResult:
    spec: ArticulationSpec
    continuity: str | None
    snapped: bool
    obb: OrientedBoundingBox = field(repr=False, default=None)


# A drawn hinge line spans its part (door edge); a hub mark is small
# against the part. The threshold is relative to the part's projected size
# so obliqueness cancels out.
HINGE_LENGTH_FRACTION = 0.3


def finalize(
    intent: SketchIntent | None,
    prediction: RawPrediction,
    part: Part,
    mesh: Mesh,
    gbuffer: GBuffer,
    camera: Camera,
) -> FinalizeResult:
    """Turn a raw prediction into a snapped ArticulationSpec.

    Rotation-axis estimate: the hinge stroke's 3D lift when present and
    long enough to be reliable; a hub-dot hinge (frontal wheel) falls back
    to the part's representative normal; the neural path's dir3 already is
    the axis. The arrow's lifted direction restores the axis sign.
    """
    part.validate_against(mesh)
    obb = fit_obb(mesh, part)
    R = camera.rotation()
    dir_world = unit(prediction.dir3 @ R)  # camera -> world
    view_dir = camera.view_dir()

    if prediction.motion_type == model.TRANSLATION:
        axis = snap_direction(dir_world, obb)
        spec = ArticulationSpec(
            model.TRANSLATION,
            axis,
            default_range(model.TRANSLATION, obb.longest_extent),
        )
        _check_moves(spec, obb)
        return FinalizeResult(spec, None, True, obb)

    axis_estimate, arrow_dir_world = _rotation_axis_estimate(
        intent, prediction, mesh, part, gbuffer, camera, dir_world, view_dir, obb
    )
    continuity = classify_continuity(mesh, part, axis_estimate, view_dir)
    if continuity == "continuous":
        axis = snap_direction(axis_estimate, obb)
        spec = ArticulationSpec(
            model.ROTATION,
            axis,
            default_range(model.ROTATION, 0.0, continuous=True),
            pivot=obb.center,
            continuous=True,
        )
        _check_moves(spec, obb)
        return FinalizeResult(spec, continuity, True, obb)

    pivot_pred = extract_pivot(prediction.pivot_heatmap, gbuffer, camera)
    snap = snap_hinge(mesh, part, pivot_pred, axis_estimate)
    axis, pivot = snap["axis"], snap["pivot"]
    # orient so the part's centroid initially moves along the arrow
    if arrow_dir_world is not None:
        velocity = np.cross(axis, obb.center - pivot)
        agreement = float(velocity @ arrow_dir_world)
        if abs(agreement) > 1e-9 and agreement < 0:
            axis = -axis
    spec = ArticulationSpec(
        model.ROTATION,
        axis,
        default_range(model.ROTATION, 0.0),
        pivot=pivot,
    )
    _check_moves(spec, obb)
    return FinalizeResult(spec, continuity, snap["snapped"], obb)


def _rotation_axis_estimate(
    intent, prediction, mesh, part, gbuffer, camera, dir_world, view_dir, obb
):
    """(axis_estimate_world, arrow_dir_world or None)."""
    if intent is not None and intent.hinge is not None:
        lifted = lift_hinge(intent.hinge, gbuffer, camera)
        corners_px, depth = camera.project(obb.corners())
        visible = depth > 0
        if visible.sum() >= 2:
            span = corners_px[visible]
            part_diag = float(
                np.linalg.norm(span.max(axis=0) - span.min(axis=0))
            )
        else:
            part_diag = 0.0
        if lifted["length_px"] >= HINGE_LENGTH_FRACTION * part_diag:
            return lifted["axis_hint"], dir_world
        # hub-dot hinge: the drawn mark is a point, axis points out of the face
        return representative_normal(mesh, part, view_dir), dir_world
    # neural path: dir3 is the predicted rotation axis itself
    return dir_world, None


def _check_moves(spec: ArticulationSpec, obb: OrientedBoundingBox) -> None:
    """The motion must displace the part at 10% range (degenerate check)."""
    if spec.range_max <= 0:
        raise DegenerateGeometryError("zero motion range")
    corners = obb.corners()
    moved = model.apply_articulation(spec, 0.1 * spec.range_max, corners)
    if float(np.linalg.norm(moved - corners, axis=1).max()) < 1e-6:
        raise DegenerateGeometryError("motion leaves the part in place")
