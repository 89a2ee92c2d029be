"""Training-data machinery: 3D motion cues, automatic cameras, human-style
stroke perturbation, quadratic Bezier fitting, and sample emission.

Everything is deterministic under its seed; samples serialize to
sample.json + tensor blocks + an SVG of the fitted Bezier strokes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from . import model
from .errors import DegenerateGeometryError, InvalidInputError
from .meshops import fit_obb
from .model import ArticulatedObject, ArticulationSpec, Part, apply_articulation, unit
from .render import Camera, render_gbuffer, write_tensor_block
from .sketch import Stroke, rasterize_strokes

ARC_CAP = np.deg2rad(60.0)  # projected arcs stay readable below this span
BARB_LEN_FRAC = 0.12        # arrowhead barb length vs cue length (2D px later)


@dataclass(frozen=True)
class MotionCue3D:
    kind: str  # rotation_arc | rotation_axis_segment | translation_segment
    points: np.ndarray  # (N, 3) polyline
    arrow_head: bool

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 2:
            raise InvalidInputError("cue needs >= 2 3D points")
        object.__setattr__(self, "points", pts)


@dataclass
class TrainingSample:
    sketch: np.ndarray
    mask: np.ndarray
    depth: np.ndarray
    normal: np.ndarray
    camera: Camera
    spec: ArticulationSpec
    part: Part
    seed: int
    shape_id: str
    strokes: list[Stroke] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Motion cues


def motion_cue(
    spec: ArticulationSpec, part_obb, part_points: np.ndarray | None = None
) -> list[MotionCue3D]:
    """Ground-truth 3D cues: rotations get an axis segment spanning the
    part plus an arrowed arc at the far edge; translations a straight
    arrowed segment from the part center.

    With part_points (part vertices) the arc anchors on the surface; OBB
    corners alone can lie off the surface entirely (a disc's box corners).
    """
    if spec.range_max <= 0:
        raise DegenerateGeometryError("zero-range joint has no drawable cue")
    if spec.motion_type == model.TRANSLATION:
        length = min(spec.range_max, 0.5 * part_obb.longest_extent)
        seg = np.stack(
            [part_obb.center, part_obb.center + length * spec.axis]
        )
        return [MotionCue3D("translation_segment", _densify(seg, 12), True)]

    axis = spec.axis
    pivot = spec.pivot
    # axis segment spanning the part's extent along the axis
    t_center = float((part_obb.center - pivot) @ axis)
    half_span = float(np.abs(part_obb.axes @ axis) @ part_obb.half_extents)
    p0 = pivot + (t_center - half_span) * axis
    p1 = pivot + (t_center + half_span) * axis
    segment = MotionCue3D("rotation_axis_segment", _densify(np.stack([p0, p1]), 12), False)

    # arc anchored at the surface point farthest from the axis line:
    # upper-hemisphere cameras see top points, so radial near-ties prefer
    # max z; the anchor is pulled inward off the silhouette so the
    # perturbed arc tail still lands on the part
    anchors = part_points if part_points is not None else part_obb.corners()
    rel = anchors - pivot
    radial = rel - np.outer(rel @ axis, axis)
    r = np.linalg.norm(radial, axis=1)
    tied = np.nonzero(r >= 0.98 * r.max())[0]
    far_anchor = anchors[tied[int(np.argmax(anchors[tied, 2]))]]
    far_rel = far_anchor - pivot
    axial = (far_rel @ axis) * axis
    far = pivot + 0.9 * axial + 0.85 * (far_rel - axial)
    sweep = min(spec.range_max, ARC_CAP)
    arc_spec = ArticulationSpec(
        model.ROTATION, axis, spec.range_max, pivot=pivot,
        continuous=spec.continuous,
    )
    values = np.linspace(0.0, sweep, 24)
    arc_pts = np.stack([apply_articulation(arc_spec, v, far) for v in values])
    arc = MotionCue3D("rotation_arc", arc_pts, True)
    return [segment, arc]


def _densify(polyline: np.ndarray, points_per_segment: int) -> np.ndarray:
    out = [polyline[0]]
    for a, b in zip(polyline[:-1], polyline[1:]):
        for t in np.linspace(0, 1, points_per_segment)[1:]:
            out.append(a + t * (b - a))
    return np.asarray(out)


# ---------------------------------------------------------------------------
# Automatic cameras


@dataclass(frozen=True)
class AutoCameraResult:
    camera: Camera
    visible_fraction: float
    flagged: bool


def auto_camera(
    mesh,
    part: Part,
    seed: int,
    resolution: int = 256,
    vfov: float = np.deg2rad(40.0),
    fill_range: tuple[float, float] = (0.4, 0.7),
    max_tries: int = 32,
    min_visible: float = 0.5,
) -> AutoCameraResult:
    """Sample an eye on the upper hemisphere within 60 deg of the part's
    facing normal, at a distance where the part fills 40-70% of the frame.

    Rejection-samples for part visibility; after max_tries the best
    candidate is returned flagged.
    """
    rng = np.random.default_rng(seed)
    obb = fit_obb(mesh, part)
    target = obb.center
    radius = float(np.linalg.norm(obb.half_extents))
    facing = _facing_direction(mesh, part, obb, radius, vfov)

    best = None
    for _ in range(max_tries):
        direction = _sample_cap(rng, facing, np.deg2rad(60.0))
        # upper hemisphere: eye z stays above the target
        if direction[2] < 0:
            direction = direction.copy()
            direction[2] = -direction[2]
            if np.linalg.norm(direction) < 1e-9:
                continue
            direction = unit(direction)
        fill = rng.uniform(*fill_range)
        distance = radius / (fill * math.tan(vfov / 2.0))
        eye = target + direction * distance
        cam = Camera(
            eye=eye, target=target, up=np.array([0.0, 0.0, 1.0]),
            vfov=vfov, width=resolution, height=resolution,
        )
        vis = _visible_fraction(mesh, part, cam)
        if best is None or vis > best[0]:
            best = (vis, cam)
        if vis >= min_visible:
            return AutoCameraResult(cam, vis, flagged=False)
    return AutoCameraResult(best[1], best[0], flagged=True)


def _facing_direction(mesh, part: Part, obb, radius: float, vfov: float) -> np.ndarray:
    """The part's outward side: the OBB axis direction whose (slightly
    oblique) probe view shows the most part PIXELS.

    Pixel counting measures visible projected area, so occluded backsides
    and edge-on slivers lose; straight-on probes would tie on face counts.
    """
    distance = radius / (0.55 * math.tan(vfov / 2.0))
    in_part = part.mask(mesh.n_faces)
    best_dir = None
    best_score = -1
    for i in range(3):
        for sign in (1.0, -1.0):
            d = sign * obb.axes[i]
            tilt = unit(
                0.85 * d + 0.27 * obb.axes[(i + 1) % 3] + 0.27 * obb.axes[(i + 2) % 3]
            )
            cam = Camera(
                eye=obb.center + tilt * distance,
                target=obb.center,
                up=np.array([0.0, 0.0, 1.0]) if abs(tilt[2]) < 0.9 else np.array([0.0, 1.0, 0.0]),
                vfov=vfov, width=64, height=64,
            )
            gb = render_gbuffer(mesh, cam)
            fg = gb.foreground()
            score = int(in_part[gb.face_id[fg]].sum())
            if score > best_score:
                best_score, best_dir = score, d
    return unit(best_dir)


def _sample_cap(rng, axis: np.ndarray, half_angle: float) -> np.ndarray:
    """Uniform direction in the spherical cap around axis."""
    cos_min = math.cos(half_angle)
    z = rng.uniform(cos_min, 1.0)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    s = math.sqrt(max(0.0, 1.0 - z * z))
    local = np.array([s * math.cos(phi), s * math.sin(phi), z])
    # rotate +z onto the axis
    a = np.array([0.0, 0.0, 1.0])
    v = np.cross(a, axis)
    c = float(a @ axis)
    if np.linalg.norm(v) < 1e-12:
        return local if c > 0 else -local
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    R = np.eye(3) + vx + vx @ vx / (1.0 + c)
    return unit(R @ local)


def _visible_fraction(mesh, part: Part, camera: Camera, probe_res: int = 96) -> float:
    """Visible part faces / front-facing part faces (occlusion measure)."""
    probe = Camera(
        eye=camera.eye, target=camera.target, up=camera.up,
        vfov=camera.vfov, width=probe_res, height=probe_res,
    )
    gb = render_gbuffer(mesh, probe)
    seen = set(np.unique(gb.face_id)) - {-1}
    part_ids = set(int(i) for i in part.face_ids)
    normals = mesh.face_normals(part.face_ids)
    centroids = mesh.face_centroids(part.face_ids)
    to_eye = camera.eye - centroids
    front = (normals * to_eye).sum(axis=1) > 0
    front_ids = set(int(i) for i in part.face_ids[front])
    if not front_ids:
        return 0.0
    return len(seen & front_ids) / len(front_ids)


# ---------------------------------------------------------------------------
# Perturbation


def perturb(
    points2d: np.ndarray,
    jitter_sigma: float = 1.5,
    drift_amp: float = 4.0,
    seed: int = 0,
) -> np.ndarray:
    """Human-style noise: i.i.d. Gaussian jitter per point plus one
    low-frequency sinusoid drift along the polyline parameter. Displacement
    hard-clamped at 4*jitter_sigma + drift_amp per point."""
    pts = np.asarray(points2d, dtype=np.float64)
    if len(pts) < 2:
        raise InvalidInputError("need >= 2 points")
    rng = np.random.default_rng(seed)
    jitter = rng.normal(0.0, jitter_sigma, size=pts.shape) if jitter_sigma > 0 else 0.0

    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    s = s / s[-1] if s[-1] > 0 else s
    phase = rng.uniform(0.0, 2.0 * math.pi)
    freq = rng.uniform(0.5, 1.5)
    theta = rng.uniform(0.0, 2.0 * math.pi)
    direction = np.array([math.cos(theta), math.sin(theta)])
    drift = (
        drift_amp * np.sin(2.0 * math.pi * freq * s + phase)[:, None] * direction
        if drift_amp > 0
        else 0.0
    )
    disp = np.asarray(jitter) + np.asarray(drift)
    if np.isscalar(disp) or disp.shape != pts.shape:
        return pts.copy()
    bound = 4.0 * jitter_sigma + drift_amp
    norms = np.linalg.norm(disp, axis=1)
    over = norms > bound
    if bound > 0 and over.any():
        disp[over] *= (bound / norms[over])[:, None]
    return pts + disp


# ---------------------------------------------------------------------------
# Quadratic Bezier fitting


def quad_bezier(p0, p1, p2, t):
    t = np.asarray(t, dtype=np.float64)[:, None]
    return (1 - t) ** 2 * p0 + 2 * t * (1 - t) * p1 + t ** 2 * p2


@dataclass(frozen=True)
class BezierSegment:
    p0: np.ndarray
    p1: np.ndarray
    p2: np.ndarray

    def sample(self, n: int = 32) -> np.ndarray:
        return quad_bezier(self.p0, self.p1, self.p2, np.linspace(0, 1, n))


def fit_bezier(points2d: np.ndarray, tol: float = 1.5) -> list[BezierSegment]:
    """Greedy split-and-fit: least-squares quadratic per span with Newton
    reparameterization, split at the max-error point while above tol.
    The chain is C0 (segments share endpoints)."""
    pts = np.asarray(points2d, dtype=np.float64)
    if len(pts) < 3:
        pts = np.vstack([pts[0], pts.mean(axis=0), pts[-1]])
    return _fit_span(pts, tol, depth=0)


def _fit_span(pts: np.ndarray, tol: float, depth: int) -> list[BezierSegment]:
    seg, err, split = _fit_one(pts)
    if err <= tol or len(pts) <= 3 or depth >= 24:
        return [seg]
    split = min(max(split, 1), len(pts) - 2)
    return _fit_span(pts[: split + 1], tol, depth + 1) + _fit_span(
        pts[split:], tol, depth + 1
    )


def _ls_p1(pts, p0, p2, t):
    b = 2 * t * (1 - t)
    target = pts - np.outer((1 - t) ** 2, p0) - np.outer(t ** 2, p2)
    denom = float((b * b).sum())
    if denom < 1e-12:
        return 0.5 * (p0 + p2)
    return (b[:, None] * target).sum(axis=0) / denom


def _fit_one(pts: np.ndarray) -> tuple[BezierSegment, float, int]:
    p0, p2 = pts[0], pts[-1]
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    t0 = s / s[-1] if s[-1] > 0 else np.linspace(0, 1, len(pts))

    # stable baseline: chord-length parameters, no reparameterization
    p1_chord = _ls_p1(pts, p0, p2, t0)
    base = BezierSegment(p0.copy(), p1_chord, p2.copy())
    base_errs = point_to_segment_distances(base, pts)
    base_score = max(float(base_errs.max()), _curve_overshoot(base, pts))
    best, best_errs, best_score = base, base_errs, base_score

    # refined: alternate LS / closest-point, then joint Gauss-Newton; this
    # nails exact-quadratic data but can hook or balloon on noisy spans
    # (point-to-curve error never penalizes curve regions without data),
    # so the symmetric overshoot gates acceptance
    t = t0
    p1 = p1_chord
    for _ in range(30):
        p1 = _ls_p1(pts, p0, p2, t)
        t_new = _reparameterize(pts, p0, p1, p2, t)
        shift = float(np.abs(t_new - t).max())
        t = t_new
        if shift < 1e-12:
            break
    p1, t = _polish_joint(pts, p0, p1, p2, t)
    refined = BezierSegment(p0.copy(), np.asarray(p1, dtype=np.float64), p2.copy())
    refined_errs = point_to_segment_distances(refined, pts)
    refined_score = max(float(refined_errs.max()), _curve_overshoot(refined, pts))
    if refined_score < best_score:
        best, best_errs, best_score = refined, refined_errs, refined_score

    split = int(np.argmax(best_errs))
    return best, best_score, split


def _curve_overshoot(seg: BezierSegment, pts: np.ndarray, dense: int = 48) -> float:
    """Max distance from the curve back to the data polyline."""
    curve = seg.sample(dense)
    a = pts[:-1]
    b = pts[1:]
    ab = b - a
    denom = (ab * ab).sum(axis=1)
    denom = np.where(denom > 1e-12, denom, 1.0)
    diff = curve[:, None, :] - a[None, :, :]
    t = np.clip((diff * ab[None]).sum(axis=2) / denom[None], 0.0, 1.0)
    proj = a[None] + t[..., None] * ab[None]
    d = np.linalg.norm(curve[:, None, :] - proj, axis=2).min(axis=1)
    return float(d.max())


def _polish_joint(pts, p0, p1, p2, t):
    """Joint refinement of the middle control point and per-point params;
    the alternating solve creeps along a flat valley, Gauss-Newton on the
    full residual closes the last few ulps (exact-data spans reach ~0)."""

    def residual(x):
        p1v = x[:2]
        tv = np.clip(x[2:], 0.0, 1.0)
        q = quad_bezier(p0, p1v, p2, tv)
        return (q - pts).ravel()

    x0 = np.concatenate([np.asarray(p1, dtype=np.float64), t])
    try:
        sol = least_squares(residual, x0, method="lm", max_nfev=200)
    except Exception:
        return np.asarray(p1, dtype=np.float64), t
    before = float((residual(x0) ** 2).sum())
    after = float((sol.fun ** 2).sum())
    if after < before:
        return sol.x[:2], np.clip(sol.x[2:], 0.0, 1.0)
    return np.asarray(p1, dtype=np.float64), t


def point_to_segment_distances(seg: BezierSegment, pts: np.ndarray,
                               dense: int = 256) -> np.ndarray:
    """True point-to-curve distances: dense argmin seed, Newton-refined."""
    pts = np.asarray(pts, dtype=np.float64)
    grid = np.linspace(0.0, 1.0, dense)
    curve = quad_bezier(seg.p0, seg.p1, seg.p2, grid)
    d2 = ((pts[:, None, :] - curve[None, :, :]) ** 2).sum(axis=2)
    t = grid[d2.argmin(axis=1)]
    for _ in range(8):
        t = _newton_t(pts, seg.p0, seg.p1, seg.p2, t)
    best = quad_bezier(seg.p0, seg.p1, seg.p2, t)
    refined = np.linalg.norm(best - pts, axis=1)
    coarse = np.sqrt(d2.min(axis=1))
    return np.minimum(refined, coarse)


def max_deviation(chain: list[BezierSegment], pts: np.ndarray) -> float:
    """Max distance from the points to the whole chain."""
    dists = np.stack([point_to_segment_distances(seg, pts) for seg in chain])
    return float(dists.min(axis=0).max())


def _newton_t(pts, p0, p1, p2, t):
    tt = np.clip(t, 0.0, 1.0)[:, None]
    q = (1 - tt) ** 2 * p0 + 2 * tt * (1 - tt) * p1 + tt ** 2 * p2
    dq = 2 * (1 - tt) * (p1 - p0) + 2 * tt * (p2 - p1)
    ddq = 2 * (p0 - 2 * p1 + p2)
    diff = q - pts
    num = (diff * dq).sum(axis=1)
    den = (dq * dq).sum(axis=1) + (diff * ddq).sum(axis=1)
    step = np.where(np.abs(den) > 1e-12, num / np.where(den == 0, 1, den), 0.0)
    return np.clip(t - step, 0.0, 1.0)


def _reparameterize(pts, p0, p1, p2, t):
    """One Newton step toward the closest-point parameters."""
    t = np.clip(t, 0.0, 1.0)
    tt = t[:, None]
    q = (1 - tt) ** 2 * p0 + 2 * tt * (1 - tt) * p1 + tt ** 2 * p2
    dq = 2 * (1 - tt) * (p1 - p0) + 2 * tt * (p2 - p1)
    ddq = 2 * (p0 - 2 * p1 + p2)
    diff = q - pts
    num = (diff * dq).sum(axis=1)
    den = (dq * dq).sum(axis=1) + (diff * ddq).sum(axis=1)
    step = np.where(np.abs(den) > 1e-12, num / np.where(den == 0, 1, den), 0.0)
    out = np.clip(t - step, 0.0, 1.0)
    out[0], out[-1] = 0.0, 1.0
    return out


def bezier_chain_to_stroke(chain: list[BezierSegment], samples_per_seg: int = 16,
                           role=None) -> Stroke:
    pts = [chain[0].sample(samples_per_seg)[0:1]]
    for seg in chain:
        pts.append(seg.sample(samples_per_seg)[1:])
    return Stroke(np.vstack(pts), role=role)


def bezier_chain_svg_path(chain: list[BezierSegment]) -> str:
    p = chain[0].p0
    out = [f"M {p[0]:.2f} {p[1]:.2f}"]
    for seg in chain:
        out.append(
            f"Q {seg.p1[0]:.2f} {seg.p1[1]:.2f} {seg.p2[0]:.2f} {seg.p2[1]:.2f}"
        )
    return " ".join(out)


# ---------------------------------------------------------------------------
# Sample generation


def _project_cue(cue: MotionCue3D, camera: Camera) -> np.ndarray:
    px, depth = camera.project(cue.points)
    if (depth <= 0).any():
        raise DegenerateGeometryError("cue point behind the camera")
    return px


def _add_arrowhead(px: np.ndarray, barb_px: float = 10.0) -> np.ndarray:
    """Append an out-back-out zigzag arrowhead at the polyline end."""
    d = px[-1] - px[-2]
    n = np.linalg.norm(d)
    if n < 1e-9:
        d = px[-1] - px[0]
        n = np.linalg.norm(d)
    d = d / max(n, 1e-9)
    perp = np.array([-d[1], d[0]])
    w = barb_px * math.tan(np.deg2rad(30.0))
    tip1 = px[-1] - barb_px * d + w * perp
    tip2 = px[-1] - barb_px * d - w * perp
    return np.vstack([px, tip1, px[-1], tip2])


def _resample_polyline(px: np.ndarray, spacing: float) -> np.ndarray:
    seg = np.linalg.norm(np.diff(px, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if total < spacing:
        return np.stack([px[0], px[-1]])
    n = max(int(total / spacing) + 1, 2)
    targets = np.linspace(0.0, total, n)
    out = np.empty((n, 2))
    for d in range(2):
        out[:, d] = np.interp(targets, s, px[:, d])
    return out


def synthesize_strokes(
    spec: ArticulationSpec,
    part_obb,
    camera: Camera,
    seed: int,
    jitter_sigma: float = 1.5,
    drift_amp: float = 4.0,
    bezier_tol: float = 1.5,
    sample_spacing_px: float = 5.0,
    part_points: np.ndarray | None = None,
) -> tuple[list[Stroke], list[list[BezierSegment]]]:
    """Project GT motion cues, perturb, fit quadratic Beziers, and sample
    them back into strokes (tail first, arrowheads preserved).

    The fit tolerance is widened to the jitter amplitude so the chain
    smooths the i.i.d. noise (a tol below the noise would chase it point
    by point); the low-frequency drift survives, as in freehand strokes.
    """
    cues = motion_cue(spec, part_obb, part_points)
    tol = max(bezier_tol, 2.0 * jitter_sigma)
    strokes: list[Stroke] = []
    chains: list[list[BezierSegment]] = []
    for i, cue in enumerate(cues):
        px = _project_cue(cue, camera)
        px = _resample_polyline(px, sample_spacing_px)
        stroke_seed = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        rng = np.random.default_rng(stroke_seed)
        # a 4 px "drift" over a 60 px stroke is a bend, not a drift; keep
        # the sinusoid amplitude proportional on short strokes
        chord = float(np.linalg.norm(px[-1] - px[0]))
        amp = min(drift_amp, 0.015 * max(chord, 1.0))
        sigma = jitter_sigma * min(1.0, chord / 60.0)  # short marks are drawn precisely
        if not cue.arrow_head:
            sigma *= 0.5  # reference lines (hinges) are drawn more carefully
        noisy = perturb(px, jitter_sigma=sigma, drift_amp=amp, seed=stroke_seed)
        chain = fit_bezier(noisy, tol=tol)
        chains.append(chain)
        pts = bezier_chain_to_stroke(chain).points
        if cue.arrow_head:
            # barbs drawn decisively at the smoothed shaft end, sized so the
            # whole arrowhead stays inside the detector's trailing window
            arclen = float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())
            barb = float(np.clip(0.055 * arclen, 5.0, 12.0))
            pts = _add_arrowhead(pts, barb_px=barb)
            pts[-3:] = pts[-3:] + rng.normal(0.0, 0.5 * jitter_sigma, size=(3, 2))
        strokes.append(Stroke(pts))
    return strokes, chains


def generate_sample(
    obj: ArticulatedObject,
    joint_index: int,
    seed: int,
    resolution: int = 256,
) -> TrainingSample:
    """Deterministic sample: auto camera -> g-buffer -> synthesized sketch
    -> rasterized channels + part mask."""
    if not 0 <= joint_index < len(obj.joints):
        raise InvalidInputError(f"joint {joint_index} does not exist")
    part, spec = obj.joints[joint_index]
    cam_res = auto_camera(obj.mesh, part, seed, resolution=resolution)
    camera = cam_res.camera
    gbuffer = render_gbuffer(obj.mesh, camera)
    obb = fit_obb(obj.mesh, part)
    part_verts = obj.mesh.vertices[np.unique(obj.mesh.faces[part.face_ids])]
    strokes, _chains = synthesize_strokes(spec, obb, camera, seed, part_points=part_verts)
    sketch_img = rasterize_strokes(strokes, resolution, resolution)
    in_part = part.mask(obj.mesh.n_faces)
    fg = gbuffer.foreground()
    mask = np.zeros(gbuffer.shape, dtype=bool)
    mask[fg] = in_part[gbuffer.face_id[fg]]
    return TrainingSample(
        sketch=sketch_img,
        mask=mask,
        depth=gbuffer.depth.copy(),
        normal=gbuffer.normal.copy(),
        camera=camera,
        spec=spec,
        part=part,
        seed=seed,
        shape_id=obj.source_id,
        strokes=strokes,
    )


def write_sample(sample: TrainingSample, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "schema_version": 1,
        "camera": sample.camera.to_json_dict(),
        "articulation": sample.spec.to_json_dict(),
        "part": sample.part.to_json_dict(),
        "seed": sample.seed,
        "shape_id": sample.shape_id,
    }
    (out / "sample.json").write_text(json.dumps(meta, sort_keys=True, indent=2))
    stack = np.stack(
        [
            sample.sketch,
            sample.mask.astype(np.float32),
            sample.depth.astype(np.float32),
            sample.normal[..., 0],
            sample.normal[..., 1],
            sample.normal[..., 2],
        ]
    ).astype(np.float32)
    (out / "maps.tnsr").write_bytes(
        write_tensor_block(stack, {"channels": ["sketch", "mask", "depth", "nx", "ny", "nz"]})
    )
    paths = []
    for stroke in sample.strokes:
        chain = fit_bezier(stroke.points, tol=0.75)
        paths.append(f'  <path d="{bezier_chain_svg_path(chain)}" fill="none" stroke="red"/>')
    h, w = sample.sketch.shape
    svg = "\n".join(
        [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">']
        + paths
        + ["</svg>"]
    )
    (out / "sketch.svg").write_text(svg + "\n")


def write_object_annotation(obj: ArticulatedObject, out_dir: str | Path,
                            obj_filename: str = "shape.obj") -> None:
    """object.json + OBJ for the annotation schema."""
    from .meshops import save_obj

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / obj_filename).write_text(save_obj(obj.mesh))
    doc = {"schema_version": 1, "mesh": obj_filename}
    doc.update(obj.to_json_dict())
    (out / "object.json").write_text(json.dumps(doc, sort_keys=True, indent=2))


# ---------------------------------------------------------------------------
# Corpus split


def split_corpus(
    samples: list, ratios=(0.7, 0.2, 0.1), seed: int = 0
) -> dict[str, list]:
    """Split by shape id (all samples of a shape share a split) with sizes
    within one shape of the requested ratios."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise InvalidInputError("ratios must sum to 1")
    by_shape: dict[str, list] = {}
    for s in samples:
        sid = s.shape_id if hasattr(s, "shape_id") else str(s)
        by_shape.setdefault(sid, []).append(s)
    shape_ids = sorted(by_shape)
    if len(shape_ids) < 3:
        raise InvalidInputError("need at least 3 shapes to split")
    rng = np.random.default_rng(seed)
    order = list(rng.permutation(shape_ids))
    n = len(order)
    n_train = int(round(ratios[0] * n))
    n_test = int(round(ratios[1] * n))
    n_train = min(max(n_train, 1), n - 2)
    n_test = min(max(n_test, 1), n - n_train - 1)
    splits = {
        "train": order[:n_train],
        "test": order[n_train : n_train + n_test],
        "val": order[n_train + n_test :],
    }
    return {
        k: [s for sid in sorted(v) for s in by_shape[sid]] for k, v in splits.items()
    }
