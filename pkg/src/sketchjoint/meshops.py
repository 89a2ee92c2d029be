"""Mesh loading, adjacency, oriented bounding boxes, and part boundaries.

Adjacency is built on exact vertex-index pairs; meshes with duplicated
vertices along seams therefore yield open boundaries unless the optional
position-welding pass is enabled.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometryError, InvalidInputError, MeshParseError
from .model import Mesh, Part, unit

WELD_TOLERANCE = 1e-6


@dataclass(frozen=True)
class OrientedBoundingBox:
    """PCA-aligned box: center, orthonormal axes (rows), positive half extents.

    Axes keep PCA order (descending covariance eigenvalue), so half_extents
    are not necessarily sorted. ``degenerate`` flags a rank-deficient
    covariance where the axes were completed arbitrarily.
    """

    center: np.ndarray
    axes: np.ndarray
    half_extents: np.ndarray
    degenerate: bool = False

    @property
    def longest_extent(self) -> float:
        """Longest box edge length (full extent, not half)."""
        return float(2.0 * self.half_extents.max())

    def corners(self) -> np.ndarray:
        signs = np.array(
            [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
            dtype=np.float64,
        )
        return self.center + (signs * self.half_extents) @ self.axes

    def contains(self, points: np.ndarray, tol: float = 1e-6) -> np.ndarray:
        local = (np.atleast_2d(points) - self.center) @ self.axes.T
        return np.all(np.abs(local) <= self.half_extents + tol, axis=1)


@dataclass(frozen=True)
class BoundaryLoop:
    """Chain of part/complement shared edges with its dominant direction.

    ``edges`` are (v0, v1) vertex-index pairs ordered along the chain;
    ``tangent`` is the unit principal direction of the edge endpoints with a
    deterministic sign (positive z, ties broken by +y then +x).
    """

    edges: list[tuple[int, int]]
    tangent: np.ndarray
    points: np.ndarray = field(repr=False, default=None)

    def line_point(self) -> np.ndarray:
        """Centroid of the chain's endpoints (a point on the fitted line)."""
        return self.points.mean(axis=0)


def _fix_sign(v: np.ndarray) -> np.ndarray:
    """Deterministic sign: prefer positive z, then y, then x."""
    for i in (2, 1, 0):
        if abs(v[i]) > 1e-12:
            return v if v[i] > 0 else -v
    return v


# ---------------------------------------------------------------------------
# OBJ I/O


def load_mesh(data: bytes | str, fmt: str = "obj") -> Mesh:
    """Parse an OBJ file into a normalized Mesh (unit bbox diagonal).

    Polygonal faces are fan-triangulated; vertex/face input order is
    preserved. Parse failures report the 1-based line number.
    """
    if fmt.lower() != "obj":
        raise InvalidInputError(f"unsupported mesh format {fmt!r}")
    text = data.decode("utf-8", errors="replace") if isinstance(data, bytes) else data
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise MeshParseError(f"line {lineno}: vertex needs 3 coords", lineno)
            try:
                vertices.append([float(x) for x in parts[1:4]])
            except ValueError:
                raise MeshParseError(f"line {lineno}: bad vertex coordinate", lineno)
        elif tag == "f":
            if len(parts) < 4:
                raise MeshParseError(f"line {lineno}: face needs >= 3 vertices", lineno)
            idx = []
            for token in parts[1:]:
                v_str = token.split("/")[0]
                try:
                    i = int(v_str)
                except ValueError:
                    raise MeshParseError(f"line {lineno}: bad face index {token!r}", lineno)
                if i < 0:
                    i = len(vertices) + i
                else:
                    i = i - 1
                if i < 0 or i >= len(vertices):
                    raise MeshParseError(
                        f"line {lineno}: face index {v_str} out of range", lineno
                    )
                idx.append(i)
            for k in range(1, len(idx) - 1):
                faces.append([idx[0], idx[k], idx[k + 1]])
        # vt/vn/usemtl/etc. are ignored
    if not vertices or not faces:
        raise MeshParseError("empty geometry: no vertices or faces")
    return Mesh.normalized(np.asarray(vertices), np.asarray(faces))


def save_obj(mesh: Mesh, denormalize: bool = False) -> str:
    """ASCII OBJ with 9 significant digits."""
    v = mesh.denormalized_vertices() if denormalize else mesh.vertices
    lines = []
    for p in v:
        lines.append("v %.9g %.9g %.9g" % (p[0], p[1], p[2]))
    for f in mesh.faces:
        lines.append("f %d %d %d" % (f[0] + 1, f[1] + 1, f[2] + 1))
    return "\n".join(lines) + "\n"


def weld_vertices(mesh: Mesh, tol: float = WELD_TOLERANCE) -> Mesh:
    """Merge positionally coincident vertices (off by default everywhere).

    Quantizes to the tolerance grid; intended for seams with exactly
    duplicated coordinates, not for general mesh repair.
    """
    keys = np.round(mesh.vertices / tol).astype(np.int64)
    _, first_idx, inverse = np.unique(
        keys, axis=0, return_index=True, return_inverse=True
    )
    remap = inverse.astype(np.int32)
    new_vertices = mesh.vertices[first_idx]
    # unique() sorts; rebuild mapping so face indices point into new_vertices
    new_faces = remap[mesh.faces]
    keep = ~(
        (new_faces[:, 0] == new_faces[:, 1])
        | (new_faces[:, 1] == new_faces[:, 2])
        | (new_faces[:, 0] == new_faces[:, 2])
    )
    return Mesh(
        new_vertices,
        new_faces[keep],
        denorm_scale=mesh.denorm_scale,
        denorm_offset=mesh.denorm_offset,
    )


# ---------------------------------------------------------------------------
# Adjacency


def edge_map(mesh: Mesh) -> dict[tuple[int, int], list[int]]:
    """Map from undirected edge (min_v, max_v) to incident face ids."""
    edges: dict[tuple[int, int], list[int]] = {}
    f = mesh.faces
    for fid in range(len(f)):
        a, b, c = int(f[fid, 0]), int(f[fid, 1]), int(f[fid, 2])
        for u, v in ((a, b), (b, c), (c, a)):
            key = (u, v) if u < v else (v, u)
            edges.setdefault(key, []).append(fid)
    return edges


def face_adjacency(mesh: Mesh) -> list[list[int]]:
    """Per-face neighbor lists over shared edges (sorted, deduplicated)."""
    adj: list[set[int]] = [set() for _ in range(mesh.n_faces)]
    for _, fids in edge_map(mesh).items():
        for i in fids:
            for j in fids:
                if i != j:
                    adj[i].add(j)
    return [sorted(s) for s in adj]


def connected_components(mesh: Mesh) -> np.ndarray:
    """Label of the edge-connected component for every face."""
    adj = face_adjacency(mesh)
    labels = np.full(mesh.n_faces, -1, dtype=np.int64)
    current = 0
    for seed in range(mesh.n_faces):
        if labels[seed] >= 0:
            continue
        stack = [seed]
        labels[seed] = current
        while stack:
            f = stack.pop()
            for g in adj[f]:
                if labels[g] < 0:
                    labels[g] = current
                    stack.append(g)
        current += 1
    return labels


# ---------------------------------------------------------------------------
# Oriented bounding boxes


def fit_obb(mesh: Mesh, part: Part) -> OrientedBoundingBox:
    """Fit a PCA box to a part.

    Axes are the eigenvectors of the area-weighted surface covariance,
    integrated exactly over each triangle (tessellation-independent; plain
    triangle-centroid covariance is biased by the fan-split diagonals).
    Extents cover all part vertices. The degenerate flag fires when the
    face centroids are collinear.
    """
    part.validate_against(mesh)
    fids = part.face_ids
    corners = mesh.face_corners(fids)  # (M, 3, 3)
    centroids = corners.mean(axis=1)
    areas = mesh.face_areas(fids)
    total = float(areas.sum())
    if total <= 0:
        raise DegenerateGeometryError("part has zero total area")
    w = areas / total
    mean = (w[:, None] * centroids).sum(axis=0)

    # Exact second moment of a triangle about `mean`:
    # (A/12) * (sum_i d_i d_i^T + (sum_i d_i)(sum_i d_i)^T), d_i = p_i - mean
    d = corners - mean
    s = d.sum(axis=1)
    second = (d[:, :, :, None] * d[:, :, None, :]).sum(axis=1) + s[:, :, None] * s[:, None, :]
    cov = ((areas / 12.0)[:, None, None] * second).sum(axis=0) / total

    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    axes = evecs[:, order].T  # rows are axes, descending eigenvalue

    dc = centroids - mean
    ccov = (w[:, None, None] * (dc[:, :, None] * dc[:, None, :])).sum(axis=0)
    cevals = np.linalg.eigvalsh(ccov)
    scale = max(float(cevals[-1]), 1e-30)
    degenerate = bool(cevals[1] < 1e-9 * max(scale, 1e-12))
    axes = np.array([_fix_sign(a) for a in axes])
    if np.linalg.det(axes) < 0:
        axes[2] = -axes[2]

    verts = mesh.vertices[np.unique(mesh.faces[fids])]
    local = (verts - mean) @ axes.T
    lo, hi = local.min(axis=0), local.max(axis=0)
    center = mean + 0.5 * (lo + hi) @ axes
    half = 0.5 * (hi - lo)
    return OrientedBoundingBox(center, axes, half, degenerate=degenerate)


# ---------------------------------------------------------------------------
# Part boundaries


def boundary_edges(mesh: Mesh, part: Part) -> list[tuple[int, int]]:
    """Edges with exactly one incident face inside the part and one outside."""
    part.validate_against(mesh)
    in_part = part.mask(mesh.n_faces)
    out = []
    for (u, v), fids in edge_map(mesh).items():
        inside = sum(1 for f in fids if in_part[f])
        outside = len(fids) - inside
        if inside >= 1 and outside >= 1:
            out.append((u, v))
    out.sort()
    return out


def part_boundary(mesh: Mesh, part: Part) -> list[BoundaryLoop]:
    """Partition part/complement shared edges into connected chains.

    Returns an empty list when the part has no shared edges (floating part
    or part == whole mesh). Chains are ordered by walking from an endpoint;
    closed loops start at their smallest vertex id.
    """
    edges = boundary_edges(mesh, part)
    if not edges:
        return []
    vert_edges: dict[int, list[int]] = {}
    for ei, (u, v) in enumerate(edges):
        vert_edges.setdefault(u, []).append(ei)
        vert_edges.setdefault(v, []).append(ei)

    unused = set(range(len(edges)))
    chains: list[list[int]] = []
    while unused:
        # Prefer starting at an endpoint vertex (degree 1); fall back to the
        # smallest vertex of any unused edge for closed loops.
        start_edge = None
        for ei in sorted(unused):
            u, v = edges[ei]
            for vv in (u, v):
                deg = sum(1 for e in vert_edges[vv] if e in unused)
                if deg == 1:
                    start_edge = ei
                    break
            if start_edge is not None:
                break
        if start_edge is None:
            start_edge = min(unused)
        chain = [start_edge]
        unused.discard(start_edge)
        # extend forward from both ends
        for end in (1, 0):
            cur = chain[-1] if end == 1 else chain[0]
            u, v = edges[cur]
            tip = v if end == 1 else u
            while True:
                nxt = [e for e in vert_edges.get(tip, []) if e in unused]
                if not nxt:
                    break
                e = min(nxt)
                unused.discard(e)
                a, b = edges[e]
                tip = b if a == tip else a
                if end == 1:
                    chain.append(e)
                else:
                    chain.insert(0, e)
        chains.append(chain)

    loops = []
    for chain in chains:
        vs = sorted({v for ei in chain for v in edges[ei]})
        pts = mesh.vertices[vs]
        tangent = _chain_tangent(pts)
        loops.append(
            BoundaryLoop([edges[ei] for ei in chain], tangent, points=pts)
        )
    loops.sort(key=lambda l: l.edges[0])
    return loops


def _chain_tangent(points: np.ndarray) -> np.ndarray:
    d = points - points.mean(axis=0)
    if len(points) < 2:
        return np.array([0.0, 0.0, 1.0])
    cov = d.T @ d
    evals, evecs = np.linalg.eigh(cov)
    return _fix_sign(unit(evecs[:, -1]))


# ---------------------------------------------------------------------------
# Representative normal


def representative_normal(
    mesh: Mesh, part: Part, view_dir: np.ndarray
) -> np.ndarray:
    """Area-weighted average of the part's view-facing face normals.

    A face is view-facing when its normal points against the view direction
    (n . -view_dir > 0). Falls back to all faces when none face the view.
    """
    part.validate_against(mesh)
    view_dir = unit(np.asarray(view_dir, dtype=np.float64))
    normals = mesh.face_normals(part.face_ids)
    areas = mesh.face_areas(part.face_ids)
    facing = normals @ (-view_dir) > 0
    if not facing.any():
        facing = np.ones(len(normals), dtype=bool)
    total = (areas[facing, None] * normals[facing]).sum(axis=0)
    n = float(np.linalg.norm(total))
    if n < 1e-12:
        raise DegenerateGeometryError("area-weighted normal vanished")
    return total / n
