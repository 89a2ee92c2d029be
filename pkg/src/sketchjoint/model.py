"""Shared domain types: meshes, parts, articulation specs, and rigid motion.

All downstream modules articulate geometry through :func:`apply_articulation`;
there is deliberately exactly one implementation of the rigid motion.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, RangeViolationError

ROTATION = "rotation"
TRANSLATION = "translation"

# Default visualization range for a bounded rotation (a door opens ~100 deg).
DEFAULT_ROTATION_RANGE = 100.0 * math.pi / 180.0
# Fraction of the part extent a translating part slides by default; keeps a
# drawer from fully exiting its slot, and is always re-calibrated by the
# kinematics collision scan.
DEFAULT_TRANSLATION_FACTOR = 0.9

TWO_PI = 2.0 * math.pi


def _as_vec3(value, name: str) -> np.ndarray:
    v = np.asarray(value, dtype=np.float64).reshape(-1)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise InvalidInputError(f"{name} must be a finite 3-vector, got {value!r}")
    return v


def unit(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise InvalidInputError("zero vector cannot be normalized")
    return v / n


@dataclass(frozen=True)
class Mesh:
    """Triangle mesh with float64 vertices and int32 face indices.

    ``denorm_scale`` / ``denorm_offset`` map normalized coordinates back to
    the source units: ``original = vertices * denorm_scale + denorm_offset``.
    """

    vertices: np.ndarray
    faces: np.ndarray
    denorm_scale: float = 1.0
    denorm_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        f = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int32))
        if v.ndim != 2 or v.shape[1] != 3:
            raise InvalidInputError("vertices must be (N, 3)")
        if f.ndim != 2 or f.shape[1] != 3:
            raise InvalidInputError("faces must be (M, 3)")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise InvalidInputError("face index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(
            self, "denorm_offset", np.asarray(self.denorm_offset, dtype=np.float64)
        )

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def face_corners(self, face_ids=None) -> np.ndarray:
        """(M, 3, 3) corner positions for the given (or all) faces."""
        f = self.faces if face_ids is None else self.faces[np.asarray(face_ids)]
        return self.vertices[f]

    def face_normals(self, face_ids=None) -> np.ndarray:
        """Unit face normals; degenerate faces get a zero normal."""
        c = self.face_corners(face_ids)
        n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        lens = np.linalg.norm(n, axis=1)
        safe = np.where(lens > 0, lens, 1.0)
        return n / safe[:, None]

    def face_areas(self, face_ids=None) -> np.ndarray:
        c = self.face_corners(face_ids)
        n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        return 0.5 * np.linalg.norm(n, axis=1)

    def face_centroids(self, face_ids=None) -> np.ndarray:
        return self.face_corners(face_ids).mean(axis=1)

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def bbox_diagonal(self) -> float:
        lo, hi = self.bbox()
        return float(np.linalg.norm(hi - lo))

    @staticmethod
    def normalized(vertices, faces) -> "Mesh":
        """Build a mesh scaled to unit bbox diagonal, centered at the origin.

        Zero-area faces are dropped. The de-normalization transform is kept
        so exports can restore source units.
        """
        v = np.asarray(vertices, dtype=np.float64)
        f = np.asarray(faces, dtype=np.int32)
        if len(v) == 0 or len(f) == 0:
            raise InvalidInputError("empty geometry")
        corners = v[f]
        areas = 0.5 * np.linalg.norm(
            np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]),
            axis=1,
        )
        f = f[areas > 1e-14]
        if len(f) == 0:
            raise InvalidInputError("no non-degenerate faces")
        lo, hi = v.min(axis=0), v.max(axis=0)
        diag = float(np.linalg.norm(hi - lo))
        if diag <= 0:
            raise InvalidInputError("degenerate bounding box")
        center = 0.5 * (lo + hi)
        return Mesh(
            (v - center) / diag, f, denorm_scale=diag, denorm_offset=center
        )

    def denormalized_vertices(self) -> np.ndarray:
        return self.vertices * self.denorm_scale + self.denorm_offset


@dataclass(frozen=True, eq=False)
class Part:
    """Sorted, unique face-index subset of a mesh."""

    face_ids: np.ndarray

    def __eq__(self, other):
        return isinstance(other, Part) and np.array_equal(
            self.face_ids, other.face_ids
        )

    def __hash__(self):
        return hash(self.face_ids.tobytes())

    def __post_init__(self):
        ids = np.unique(np.asarray(self.face_ids, dtype=np.int64))
        if ids.size == 0:
            raise InvalidInputError("part must be non-empty")
        if ids.min() < 0:
            raise InvalidInputError("negative face id")
        object.__setattr__(self, "face_ids", ids)

    def validate_against(self, mesh: Mesh) -> None:
        if self.face_ids.max() >= mesh.n_faces:
            raise InvalidInputError("part references faces outside the mesh")

    def __len__(self) -> int:
        return int(self.face_ids.size)

    def mask(self, n_faces: int) -> np.ndarray:
        m = np.zeros(n_faces, dtype=bool)
        m[self.face_ids] = True
        return m

    def to_json_dict(self) -> dict:
        return {"face_ids": [int(i) for i in self.face_ids]}

    @staticmethod
    def from_json_dict(d: dict) -> "Part":
        return Part(np.asarray(d["face_ids"], dtype=np.int64))


@dataclass(frozen=True, eq=False)
class ArticulationSpec:
    """One joint: motion type, pivot/axis, and the value range [0, range_max].

    Rotation values are radians, translation values are object units. A
    continuous rotation always has range_max = 2*pi. The pivot is only
    meaningful for rotations and is None for translations.
    """

    motion_type: str
    axis: np.ndarray
    range_max: float
    pivot: np.ndarray | None = None
    continuous: bool = False

    def __eq__(self, other):
        if not isinstance(other, ArticulationSpec):
            return NotImplemented
        pivots_equal = (
            self.pivot is None
            and other.pivot is None
            or (
                self.pivot is not None
                and other.pivot is not None
                and np.array_equal(self.pivot, other.pivot)
            )
        )
        return (
            self.motion_type == other.motion_type
            and self.continuous == other.continuous
            and self.range_max == other.range_max
            and np.array_equal(self.axis, other.axis)
            and pivots_equal
        )

    def __post_init__(self):
        if self.motion_type not in (ROTATION, TRANSLATION):
            raise InvalidInputError(f"unknown motion type {self.motion_type!r}")
        axis = _as_vec3(self.axis, "axis")
        n = float(np.linalg.norm(axis))
        if abs(n - 1.0) > 1e-6:
            raise InvalidInputError(f"axis must be unit length, |axis|={n:.6g}")
        object.__setattr__(self, "axis", axis / n)
        if self.motion_type == TRANSLATION:
            if self.continuous:
                raise InvalidInputError("translation cannot be continuous")
            object.__setattr__(self, "pivot", None)
        else:
            if self.pivot is None:
                raise InvalidInputError("rotation requires a pivot")
            object.__setattr__(self, "pivot", _as_vec3(self.pivot, "pivot"))
        r = float(self.range_max)
        if not math.isfinite(r) or r < 0:
            raise InvalidInputError(f"range_max must be >= 0, got {r}")
        if self.continuous and abs(r - TWO_PI) > 1e-9:
            raise InvalidInputError("continuous rotation must have range 2*pi")
        object.__setattr__(self, "range_max", r)

    def with_range(self, range_max: float) -> "ArticulationSpec":
        return ArticulationSpec(
            self.motion_type, self.axis, range_max, self.pivot, self.continuous
        )

    def to_json_dict(self) -> dict:
        return {
            "motion_type": self.motion_type,
            "continuous": bool(self.continuous),
            "pivot": None if self.pivot is None else [float(x) for x in self.pivot],
            "axis": [float(x) for x in self.axis],
            "range_max": float(self.range_max),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @staticmethod
    def from_json_dict(d: dict) -> "ArticulationSpec":
        return ArticulationSpec(
            motion_type=d["motion_type"],
            axis=np.asarray(d["axis"], dtype=np.float64),
            range_max=float(d["range_max"]),
            pivot=None if d.get("pivot") is None else np.asarray(d["pivot"]),
            continuous=bool(d.get("continuous", False)),
        )


@dataclass
class ArticulatedObject:
    """A mesh plus its authored joints; joint parts must be pairwise disjoint."""

    mesh: Mesh
    joints: list[tuple[Part, ArticulationSpec]] = field(default_factory=list)
    source_id: str = ""
    category: str = ""

    def __post_init__(self):
        self._check_disjoint([p for p, _ in self.joints])

    @staticmethod
    def _check_disjoint(parts: list[Part]) -> None:
        seen: set[int] = set()
        for p in parts:
            ids = set(int(i) for i in p.face_ids)
            if seen & ids:
                raise InvalidInputError("joint parts must be pairwise disjoint")
            seen |= ids

    def add_joint(self, part: Part, spec: ArticulationSpec) -> None:
        part.validate_against(self.mesh)
        self._check_disjoint([p for p, _ in self.joints] + [part])
        self.joints.append((part, spec))

    def to_json_dict(self) -> dict:
        return {
            "source_id": self.source_id,
            "category": self.category,
            "joints": [
                {"part": p.to_json_dict(), "articulation": s.to_json_dict()}
                for p, s in self.joints
            ],
        }


def rotation_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a unit axis."""
    x, y, z = axis
    c, s = math.cos(angle), math.sin(angle)
    t = 1.0 - c
    return np.array(
        [
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        ]
    )


def apply_articulation(
    spec: ArticulationSpec, value: float, points: np.ndarray
) -> np.ndarray:
    """Rigidly move ``points`` by the joint at parameter ``value``.

    Accepts a single (3,) point or an (N, 3) array; returns the same shape.
    Values outside [0, range_max] raise; callers that want clamping must
    clamp explicitly.
    """
    value = float(value)
    if not (-1e-12 <= value <= spec.range_max + 1e-12):
        raise RangeViolationError(
            f"value {value} outside [0, {spec.range_max}]", value=value
        )
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if spec.motion_type == TRANSLATION:
        out = pts + value * spec.axis
    else:
        rot = rotation_matrix(spec.axis, value)
        out = (pts - spec.pivot) @ rot.T + spec.pivot
    return out[0] if single else out


def default_range(
    motion_type: str, part_extent: float, continuous: bool = False
) -> float:
    """Default motion range: 100 deg for bounded rotations, 2*pi for
    continuous ones, 0.9x the part extent for translations."""
    if motion_type == ROTATION:
        return TWO_PI if continuous else DEFAULT_ROTATION_RANGE
    if part_extent <= 0 or not math.isfinite(part_extent):
        raise InvalidInputError(f"part extent must be positive, got {part_extent}")
    return DEFAULT_TRANSLATION_FACTOR * part_extent
