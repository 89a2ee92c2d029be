"""Stroke representation, articulation-intent classification, and lifting
of 2D sketch cues onto the 3D surface.

A translation is one directional arrow; a rotation is a straight hinge line
plus an arrow. Explicit role tags from the UI always win over the
classifier. All heuristics' thresholds live in ClassifierConfig.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AmbiguousSketchError, CoverageError, InvalidInputError, NoSurfaceError
from .render import Camera, GBuffer, backproject, nearest_foreground

ROLE_ARROW = "arrow"
ROLE_HINGE = "hinge"


@dataclass(frozen=True)
class ClassifierConfig:
    straightness_min: float = 0.97     # chord/arc ratio for hinge candidates
    head_window: float = 0.25          # trailing fraction scanned for a head
    reversal_angle_deg: float = 90.0   # direction-change threshold
    min_reversals: int = 2
    min_shaft_px: float = 8.0
    dir_chord_fraction: float = 0.30   # trailing shaft fraction for dir2d
    group_radius_px: float = 20.0      # barb-to-shaft grouping distance
    tail_snap_px: float = 24.0         # lift: max snap distance to foreground
    hinge_sample_px: float = 2.0
    hinge_min_coverage: float = 0.60


DEFAULT_CONFIG = ClassifierConfig()


@dataclass(frozen=True)
class Stroke:
    """Polyline in pixel coordinates with an optional role tag."""

    points: np.ndarray
    role: str | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise InvalidInputError("stroke points must be (N, 2)")
        # drop consecutive duplicates
        if len(pts) > 1:
            keep = np.ones(len(pts), dtype=bool)
            keep[1:] = np.linalg.norm(np.diff(pts, axis=0), axis=1) > 1e-9
            pts = pts[keep]
        if len(pts) < 2:
            raise InvalidInputError("stroke needs at least 2 distinct points")
        if self.role not in (None, ROLE_ARROW, ROLE_HINGE):
            raise InvalidInputError(f"unknown stroke role {self.role!r}")
        object.__setattr__(self, "points", pts)

    def arc_length(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())

    def chord_length(self) -> float:
        return float(np.linalg.norm(self.points[-1] - self.points[0]))

    def straightness(self) -> float:
        arc = self.arc_length()
        return self.chord_length() / arc if arc > 0 else 0.0


@dataclass(frozen=True)
class ArrowGeom:
    tail: np.ndarray
    head: np.ndarray
    dir2d: np.ndarray


@dataclass(frozen=True)
class LineGeom:
    p0: np.ndarray
    p1: np.ndarray


@dataclass(frozen=True)
class SketchIntent:
    kind: str  # "translation" | "rotation"
    arrow: ArrowGeom
    hinge: LineGeom | None = None


def strokes_from_wire(payload: dict, image_size: tuple[int, int] | None = None) -> list[Stroke]:
    """Parse the stroke wire JSON {"strokes": [{"role", "points"}]}.

    With image_size given, coordinates are validated to lie within the image
    bounds plus a 16 px slack.
    """
    strokes = []
    for s in payload.get("strokes", []):
        stroke = Stroke(np.asarray(s["points"], dtype=np.float64), role=s.get("role"))
        if image_size is not None:
            w, h = image_size
            p = stroke.points
            if (p[:, 0] < -16).any() or (p[:, 0] > w + 16).any() or (
                p[:, 1] < -16
            ).any() or (p[:, 1] > h + 16).any():
                raise InvalidInputError("stroke coordinates outside image bounds")
        strokes.append(stroke)
    return strokes


def strokes_to_wire(strokes: list[Stroke]) -> dict:
    return {
        "strokes": [
            {"role": s.role, "points": [[float(x), float(y)] for x, y in s.points]}
            for s in strokes
        ]
    }


# ---------------------------------------------------------------------------
# Arrowhead detection


def _segment_dirs(points: np.ndarray) -> np.ndarray:
    d = np.diff(points, axis=0)
    lens = np.linalg.norm(d, axis=1)
    ok = lens > 1e-9
    return d[ok] / lens[ok, None]


def _count_reversals(points: np.ndarray, angle_deg: float) -> int:
    dirs = _segment_dirs(points)
    if len(dirs) < 2:
        return 0
    cosines = (dirs[:-1] * dirs[1:]).sum(axis=1)
    return int((cosines < np.cos(np.deg2rad(angle_deg))).sum())


def _arclength_params(points: np.ndarray) -> np.ndarray:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    return s / s[-1] if s[-1] > 0 else s


def _terminal_window_idx(points: np.ndarray, fraction: float, end: int) -> np.ndarray:
    """Indices of the trailing (end=1) or leading (end=0) arclength fraction,
    extended by one point so the junction segment is included."""
    t = _arclength_params(points)
    if end == 1:
        idx = np.nonzero(t >= 1.0 - fraction)[0]
        if len(idx) and idx[0] > 0:
            idx = np.concatenate([[idx[0] - 1], idx])
    else:
        idx = np.nonzero(t <= fraction)[0]
        if len(idx) and idx[-1] < len(points) - 1:
            idx = np.concatenate([idx, [idx[-1] + 1]])
    return idx


def detect_arrowhead(stroke: Stroke, config: ClassifierConfig = DEFAULT_CONFIG) -> int | None:
    """Return the index of the head end (0=start, 1=end) if the stroke has a
    terminal zigzag arrowhead, else None."""
    for end in (1, 0):
        idx = _terminal_window_idx(stroke.points, config.head_window, end)
        window = stroke.points[idx]
        if len(window) >= 3 and _count_reversals(window, config.reversal_angle_deg) >= config.min_reversals:
            return end
    return None


# ---------------------------------------------------------------------------
# Classification


def classify_strokes(
    strokes: list[Stroke], config: ClassifierConfig = DEFAULT_CONFIG
) -> SketchIntent:
    """Classify 1-4 strokes into translation (one arrow) or rotation
    (hinge line + arrow). Explicit role tags win; untagged strokes are
    classified by straightness, arrowhead presence, and barb attachment:
    a short stroke ending near a longer one's endpoint is that stroke's
    arrowhead barb, a plain straight stroke is a hinge candidate, and
    everything else is an arrow.
    """
    if not 1 <= len(strokes) <= 4:
        raise AmbiguousSketchError(
            f"expected 1-4 strokes, got {len(strokes)}", candidates=[]
        )
    hinge_candidates = [s for s in strokes if s.role == ROLE_HINGE]
    if len(hinge_candidates) > 1:
        raise AmbiguousSketchError(
            "more than one stroke tagged as hinge",
            candidates=[_stroke_summary(s) for s in hinge_candidates],
        )
    arrow_groups: list[list[Stroke]] = []
    if any(s.role == ROLE_ARROW for s in strokes):
        arrow_groups.append([s for s in strokes if s.role == ROLE_ARROW])

    untagged = sorted(
        (s for s in strokes if s.role is None),
        key=lambda s: -s.arc_length(),
    )
    standalone: list[list[Stroke]] = []
    for s in untagged:
        host = _barb_host(s, standalone, arrow_groups, config)
        if host is not None:
            host.append(s)
        else:
            standalone.append([s])

    for group in standalone:
        lead = group[0]
        if (
            len(group) == 1
            and lead.straightness() > config.straightness_min
            and detect_arrowhead(lead, config) is None
        ):
            hinge_candidates.append(lead)
        else:
            arrow_groups.append(group)

    if len(hinge_candidates) > 1:
        raise AmbiguousSketchError(
            "more than one hinge-line candidate",
            candidates=[_stroke_summary(s) for s in hinge_candidates],
        )
    if not arrow_groups:
        raise AmbiguousSketchError("no arrow stroke found", candidates=[])
    if len(arrow_groups) > 1:
        raise AmbiguousSketchError(
            "multiple disjoint arrows",
            candidates=[_stroke_summary(g[0]) for g in arrow_groups],
        )
    arrow = parse_arrow(arrow_groups[0], config)

    if hinge_candidates:
        h = hinge_candidates[0]
        return SketchIntent(
            "rotation", arrow, hinge=LineGeom(h.points[0].copy(), h.points[-1].copy())
        )
    return SketchIntent("translation", arrow)


def _barb_host(
    s: Stroke,
    standalone: list[list[Stroke]],
    arrow_groups: list[list[Stroke]],
    config: ClassifierConfig,
) -> list[Stroke] | None:
    """Group a short stroke as an arrowhead barb of a longer stroke whose
    endpoint it touches.

    When the host already carries a terminal zigzag, only its head end
    accepts barbs; a short mark near the host's tail (a wheel's hub dot
    next to the arc start) is not a barb.
    """
    ends = np.stack([s.points[0], s.points[-1]])
    for group in arrow_groups + standalone:
        lead = group[0]
        if s.arc_length() > 0.5 * lead.arc_length():
            continue
        head = detect_arrowhead(lead, config)
        if head is None:
            lead_ends = np.stack([lead.points[0], lead.points[-1]])
        else:
            lead_ends = lead.points[-1:] if head == 1 else lead.points[:1]
        d = np.linalg.norm(ends[:, None, :] - lead_ends[None, :, :], axis=2).min()
        if d <= config.group_radius_px:
            return group
    return None


def _stroke_summary(s: Stroke) -> dict:
    return {
        "start": [float(x) for x in s.points[0]],
        "end": [float(x) for x in s.points[-1]],
        "n_points": int(len(s.points)),
    }


def _near_existing_arrow(s: Stroke, arrows: list[Stroke], config: ClassifierConfig) -> bool:
    """Short straight strokes next to an arrow are barbs, not hinge lines."""
    if s.arc_length() > 4 * config.group_radius_px:
        return False
    for a in arrows:
        d = min(
            np.linalg.norm(s.points[0] - a.points[-1]),
            np.linalg.norm(s.points[-1] - a.points[-1]),
            np.linalg.norm(s.points[0] - a.points[0]),
            np.linalg.norm(s.points[-1] - a.points[0]),
        )
        if d < config.group_radius_px:
            return True
    return False


def _group_strokes(strokes: list[Stroke], radius: float) -> list[list[Stroke]]:
    """Union strokes whose endpoints come within `radius` of each other."""
    n = len(strokes)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    ends = [np.stack([s.points[0], s.points[-1]]) for s in strokes]
    for i in range(n):
        for j in range(i + 1, n):
            d = np.linalg.norm(ends[i][:, None, :] - ends[j][None, :, :], axis=2).min()
            if d <= radius:
                parent[find(i)] = find(j)
    groups: dict[int, list[Stroke]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(strokes[i])
    return [groups[k] for k in sorted(groups)]


# ---------------------------------------------------------------------------
# Arrow parsing


def parse_arrow(
    strokes: list[Stroke], config: ClassifierConfig = DEFAULT_CONFIG
) -> ArrowGeom:
    """Extract tail/head/direction from 1-3 strokes forming an arrow.

    The longest stroke is the shaft; barb strokes vote for the head end.
    A lone stroke uses its terminal zigzag; fallback is last-drawn = head.
    """
    if not 1 <= len(strokes) <= 3:
        raise AmbiguousSketchError(f"arrow needs 1-3 strokes, got {len(strokes)}")
    shaft = max(strokes, key=lambda s: s.arc_length())
    barbs = [s for s in strokes if s is not shaft]
    pts = shaft.points

    if barbs:
        barb_center = np.vstack([b.points for b in barbs]).mean(axis=0)
        head_end = int(
            np.linalg.norm(pts[-1] - barb_center) < np.linalg.norm(pts[0] - barb_center)
        )
    else:
        head_end = detect_arrowhead(shaft, config)
        if head_end is not None:
            pts = _strip_arrowhead(pts, head_end, config)
        else:
            head_end = 1  # fallback: last drawn point is the head

    if head_end == 0:
        pts = pts[::-1]
    if np.linalg.norm(np.diff(pts, axis=0), axis=1).sum() < config.min_shaft_px:
        raise AmbiguousSketchError("arrow shaft shorter than 8 px")

    tail, head = pts[0].copy(), pts[-1].copy()
    # direction from the chord of the trailing 30% of the shaft
    t = _arclength_params(pts)
    trailing = pts[t >= 1.0 - config.dir_chord_fraction]
    chord = trailing[-1] - trailing[0]
    if np.linalg.norm(chord) < 1e-9:
        chord = head - tail
    dir2d = chord / np.linalg.norm(chord)
    return ArrowGeom(tail, head, dir2d)


def _strip_arrowhead(points: np.ndarray, head_end: int, config: ClassifierConfig) -> np.ndarray:
    """Truncate the zigzag arrowhead so the shaft chord is clean.

    The shaft ends where the first reversal's leading segment starts; head
    accuracy is one polyline sample.
    """
    pts = points if head_end == 1 else points[::-1]
    idx = _terminal_window_idx(pts, config.head_window, 1)
    window = pts[idx]
    dirs = _segment_dirs(window)
    cut = None
    if len(dirs) >= 2:
        cosines = (dirs[:-1] * dirs[1:]).sum(axis=1)
        rev = np.nonzero(cosines < np.cos(np.deg2rad(config.reversal_angle_deg)))[0]
        if len(rev):
            cut = idx[rev[0]]  # start point of the first reversal segment
    out = pts[: cut + 1] if cut is not None and cut >= 1 else pts
    return out if head_end == 1 else out[::-1]


# ---------------------------------------------------------------------------
# Lifting to 3D


def lift_arrow(
    arrow: ArrowGeom,
    gbuffer: GBuffer,
    camera: Camera,
    config: ClassifierConfig = DEFAULT_CONFIG,
) -> dict:
    """Anchor the arrow tail on the surface and lift its direction to camera
    space (parallel to the image plane at the tail's depth; any out-of-plane
    component is recovered later by snapping)."""
    tail_px = (int(arrow.tail[0]), int(arrow.tail[1]))
    H, W = gbuffer.shape
    inside = 0 <= tail_px[0] < W and 0 <= tail_px[1] < H
    if not inside or gbuffer.face_id[tail_px[1], tail_px[0]] < 0:
        snapped = nearest_foreground(gbuffer, arrow.tail, config.tail_snap_px)
        if snapped is None:
            raise NoSurfaceError(
                f"no foreground within {config.tail_snap_px:.0f} px of the arrow tail"
            )
        tail_px = snapped
    anchor = backproject(tail_px, gbuffer, camera)
    tail_depth = gbuffer.depth[tail_px[1], tail_px[0]]

    # Rays through the exact drawn coordinates (pixel_ray_cam treats input
    # as pixel indices, so shift by the half-pixel it re-adds); both
    # evaluated at the tail depth, so the direction is image-parallel.
    endpoints = np.stack([arrow.tail, arrow.head]) - 0.5
    rays = camera.pixel_ray_cam(endpoints)
    p_tail, p_head = rays[0] * tail_depth, rays[1] * tail_depth
    d = p_head - p_tail
    n = np.linalg.norm(d)
    if n < 1e-12:
        raise InvalidInputError("arrow head coincides with tail")
    return {"anchor": anchor, "dir3": d / n, "tail_px": tail_px}


def lift_hinge(
    hinge: LineGeom,
    gbuffer: GBuffer,
    camera: Camera,
    config: ClassifierConfig = DEFAULT_CONFIG,
) -> dict:
    """Back-project the hinge segment's foreground samples; the pivot is the
    sample nearest the segment midpoint, the axis hint the samples' 3D
    principal direction (world space)."""
    p0, p1 = np.asarray(hinge.p0, float), np.asarray(hinge.p1, float)
    length = np.linalg.norm(p1 - p0)
    n_samples = max(int(length / config.hinge_sample_px) + 1, 2)
    ts = np.linspace(0.0, 1.0, n_samples)
    samples = p0 + ts[:, None] * (p1 - p0)

    H, W = gbuffer.shape
    fg_points = []
    fg_ts = []
    for t, s in zip(ts, samples):
        x, y = int(s[0]), int(s[1])
        if 0 <= x < W and 0 <= y < H and gbuffer.face_id[y, x] >= 0:
            fg_points.append(backproject((x, y), gbuffer, camera))
            fg_ts.append(t)
    coverage = len(fg_points) / n_samples
    if coverage < config.hinge_min_coverage:
        raise CoverageError(
            f"hinge foreground coverage {coverage:.2f} below "
            f"{config.hinge_min_coverage:.2f}"
        )
    fg_points = np.asarray(fg_points)
    fg_ts = np.asarray(fg_ts)
    mid_idx = int(np.argmin(np.abs(fg_ts - 0.5)))
    pivot = fg_points[mid_idx]

    d = fg_points - fg_points.mean(axis=0)
    cov = d.T @ d
    evals, evecs = np.linalg.eigh(cov)
    axis = evecs[:, -1]
    # deterministic sign: positive z, ties by y then x
    for i in (2, 1, 0):
        if abs(axis[i]) > 1e-12:
            if axis[i] < 0:
                axis = -axis
            break
    return {"pivot": pivot, "axis_hint": axis / np.linalg.norm(axis),
            "length_px": float(length), "coverage": coverage}


# ---------------------------------------------------------------------------
# Rasterization (sketch channel for the adapter protocol and training data)


def rasterize_strokes(
    strokes: list[Stroke], width: int, height: int, stroke_width: float = 2.0
) -> np.ndarray:
    """Anti-aliased polyline rasterization: intensity 1 inside the core
    width, linear falloff over one extra pixel."""
    img = np.zeros((height, width), dtype=np.float32)
    half = stroke_width / 2.0
    for stroke in strokes:
        pts = stroke.points
        for a, b in zip(pts[:-1], pts[1:]):
            _raster_segment(img, a, b, half)
    return img


def _raster_segment(img: np.ndarray, a: np.ndarray, b: np.ndarray, half: float):
    h, w = img.shape
    lo = np.floor(np.minimum(a, b) - half - 1).astype(int)
    hi = np.ceil(np.maximum(a, b) + half + 1).astype(int)
    x0, y0 = max(lo[0], 0), max(lo[1], 0)
    x1, y1 = min(hi[0], w - 1), min(hi[1], h - 1)
    if x1 < x0 or y1 < y0:
        return
    xs = np.arange(x0, x1 + 1) + 0.5
    ys = np.arange(y0, y1 + 1) + 0.5
    px, py = np.meshgrid(xs, ys)
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-12:
        t = np.zeros_like(px)
    else:
        t = np.clip(((px - a[0]) * ab[0] + (py - a[1]) * ab[1]) / denom, 0.0, 1.0)
    dx = px - (a[0] + t * ab[0])
    dy = py - (a[1] + t * ab[1])
    dist = np.sqrt(dx * dx + dy * dy)
    val = np.clip(1.0 - np.maximum(dist - half, 0.0), 0.0, 1.0)
    region = img[y0 : y1 + 1, x0 : x1 + 1]
    np.maximum(region, val.astype(np.float32), out=region)
