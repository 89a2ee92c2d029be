"""Procedural demo shapes with constructed ground-truth articulations.

These are the only assets the repo ships: coarse CAD-like assemblies
(cabinets with drawers, hinged doors, wheels) whose part face-sets and
joint parameters are known exactly by construction. Used by the test
suite, the dataset synthesizer, and the CLI demos.
"""

from __future__ import annotations

import math

import numpy as np

from .model import (
    ROTATION,
    TRANSLATION,
    ArticulatedObject,
    ArticulationSpec,
    Mesh,
    Part,
    default_range,
)

# Box corner i has +x iff bit0(i), +y iff bit1(i), +z iff bit2(i).
# Quads are CCW seen from outside.
_BOX_QUADS = [
    (0, 4, 6, 2),  # -x
    (5, 1, 3, 7),  # +x
    (0, 1, 5, 4),  # -y
    (2, 6, 7, 3),  # +y
    (0, 2, 3, 1),  # -z
    (4, 5, 7, 6),  # +z
]


def box_geometry(center, size, vertex_offset: int = 0):
    """Vertices and outward-facing triangles of an axis-aligned box."""
    c = np.asarray(center, dtype=np.float64)
    h = 0.5 * np.asarray(size, dtype=np.float64)
    signs = np.array(
        [[(i >> 0 & 1) * 2 - 1, (i >> 1 & 1) * 2 - 1, (i >> 2 & 1) * 2 - 1] for i in range(8)],
        dtype=np.float64,
    )
    verts = c + signs * h
    faces = []
    for a, b, cc, d in _BOX_QUADS:
        faces.append([a + vertex_offset, b + vertex_offset, cc + vertex_offset])
        faces.append([a + vertex_offset, cc + vertex_offset, d + vertex_offset])
    return verts, np.asarray(faces, dtype=np.int64)


def cylinder_geometry(center, axis_dir: int, radius: float, thickness: float, segments: int = 24):
    """Closed disc (capped cylinder) with its axis along a coordinate axis."""
    c = np.asarray(center, dtype=np.float64)
    ax = np.zeros(3)
    ax[axis_dir] = 1.0
    u = np.zeros(3)
    u[(axis_dir + 1) % 3] = 1.0
    v = np.cross(ax, u)
    angles = np.linspace(0, 2 * math.pi, segments, endpoint=False)
    ring = np.outer(np.cos(angles), u) + np.outer(np.sin(angles), v)
    top = c + 0.5 * thickness * ax + radius * ring
    bot = c - 0.5 * thickness * ax + radius * ring
    verts = np.vstack([top, bot, c + 0.5 * thickness * ax, c - 0.5 * thickness * ax])
    n = segments
    i_top_c, i_bot_c = 2 * n, 2 * n + 1
    faces = []
    for i in range(n):
        j = (i + 1) % n
        faces.append([i_top_c, i, j])
        faces.append([i_bot_c, n + j, n + i])
        faces.append([i, n + i, n + j])
        faces.append([i, n + j, j])
    return verts, np.asarray(faces, dtype=np.int64)


class MeshBuilder:
    """Accumulates geometry into one mesh and tracks per-part face ids."""

    def __init__(self):
        self._verts: list[np.ndarray] = []
        self._faces: list[np.ndarray] = []
        self.parts: dict[str, list[int]] = {}
        self._nv = 0
        self._nf = 0

    def add_box(self, name: str, center, size) -> None:
        v, f = box_geometry(center, size, vertex_offset=self._nv)
        self._append(name, v, f)

    def add_faces(self, name: str, verts, faces) -> None:
        self._append(name, np.asarray(verts, dtype=np.float64),
                     np.asarray(faces, dtype=np.int64) + self._nv)

    def _append(self, name, v, f):
        self._verts.append(v)
        self._faces.append(f)
        self.parts.setdefault(name, []).extend(range(self._nf, self._nf + len(f)))
        self._nv += len(v)
        self._nf += len(f)

    def weld(self, src: int, dst: int) -> None:
        """Redirect faces referencing global vertex src to dst (positions
        must already coincide)."""
        self._weld_pairs = getattr(self, "_weld_pairs", [])
        self._weld_pairs.append((src, dst))

    def build(self, normalize: bool = True) -> tuple[Mesh, dict[str, Part]]:
        verts = np.vstack(self._verts)
        faces = np.vstack(self._faces)
        for src, dst in getattr(self, "_weld_pairs", []):
            if not np.allclose(verts[src], verts[dst], atol=1e-9):
                raise AssertionError(f"weld {src}->{dst}: positions differ")
            faces[faces == src] = dst
        mesh = Mesh.normalized(verts, faces) if normalize else Mesh(verts, faces)
        parts = {k: Part(np.asarray(v)) for k, v in self.parts.items()}
        return mesh, parts


def open_box_walls(center, size, open_axis: int, open_sign: int, thickness: float):
    """(center, size) wall boxes of a cavity open on one side."""
    c = np.asarray(center, dtype=np.float64)
    s = np.asarray(size, dtype=np.float64)
    walls = []
    for axis in range(3):
        for sign in (-1, 1):
            if axis == open_axis and sign == open_sign:
                continue
            wc = c.copy()
            wc[axis] += sign * (s[axis] - thickness) / 2.0
            ws = s.copy()
            ws[axis] = thickness
            walls.append((wc, ws))
    return walls


def _normalized_transform(mesh: Mesh):
    """Callable mapping source coordinates into the mesh's normalized frame."""
    scale = 1.0 / mesh.denorm_scale
    offset = mesh.denorm_offset

    def to_norm(p):
        return (np.asarray(p, dtype=np.float64) - offset) * scale

    return to_norm, scale


# ---------------------------------------------------------------------------
# Demo assemblies


def make_cabinet(
    drawer_open_fraction: float = 0.0, normalize: bool = True, variant: int = 0
) -> ArticulatedObject:
    """Cabinet body (front-open cavity) with a floating drawer box inside.

    The drawer is a separate connected component that translates along +y
    (out the front). Its longest extent lies along the travel axis, so the
    0.9x default range keeps it inside the slot. Variants vary dimensions
    deterministically.
    """
    jitter = 0.0 if variant == 0 else 0.15
    rng = np.random.default_rng(1000 + variant)
    b = MeshBuilder()
    body_size = np.array([0.8, 0.7, 0.5]) * (1.0 + jitter * rng.uniform(-1, 1, 3))
    t = 0.04
    for wc, ws in open_box_walls(np.zeros(3), body_size, open_axis=1, open_sign=1, thickness=t):
        b.add_box("body", wc, ws)
    if variant == 0:
        drawer_size = np.array([0.5, 0.6, 0.3])
    else:
        drawer_size = np.array(
            [body_size[0] - 3 * t, body_size[1] - 2.5 * t, body_size[2] - 3 * t]
        )
        drawer_size[0] = min(drawer_size[0], 0.92 * drawer_size[1])
        drawer_size[2] = min(drawer_size[2], 0.92 * drawer_size[1])
    drawer_center = np.array([0.0, 0.01 + drawer_open_fraction * drawer_size[1], 0.0])
    b.add_box("drawer", drawer_center, drawer_size)
    mesh, parts = b.build(normalize=normalize)
    _, scale = _normalized_transform(mesh) if normalize else (None, 1.0)
    spec = ArticulationSpec(
        TRANSLATION,
        np.array([0.0, 1.0, 0.0]),
        default_range(TRANSLATION, float(drawer_size.max()) * scale),
    )
    obj = ArticulatedObject(mesh, source_id="cabinet", category="cabinet")
    obj.add_joint(parts["drawer"], spec)
    return obj


def make_fridge(normalize: bool = True, variant: int = 0) -> ArticulatedObject:
    """Fridge body with a flush door slab welded along one vertical edge.

    The door's back-right vertical edge and the body's front-right vertical
    edge share welded vertices, so part_boundary(door) yields exactly one
    chain: the hinge column at (x=+wx/2, y=y_front), tangent +z. Ground
    truth: bounded rotation about +z through that column.
    """
    jitter = 0.0 if variant == 0 else 0.15
    rng = np.random.default_rng(2000 + variant)
    wx, wy, wz = np.array([0.6, 0.5, 0.9]) * (1.0 + jitter * rng.uniform(-1, 1, 3))
    door_t = 0.08
    y_front = wy / 2.0 - door_t  # body front plane == door back plane
    b = MeshBuilder()
    b.add_box("body", [0.0, -door_t / 2.0, 0.0], [wx, wy - door_t, wz])
    b.add_box("door", [0.0, y_front + door_t / 2.0, 0.0], [wx, door_t, wz])
    # door corners (+x,-y,+-z) == body corners (+x,+y,+-z)
    b.weld(8 + 1, 3)
    b.weld(8 + 5, 7)
    mesh, parts = b.build(normalize=normalize)
    to_norm = _normalized_transform(mesh)[0] if normalize else (lambda p: np.asarray(p, float))
    pivot = to_norm([wx / 2.0, y_front, 0.0])
    spec = ArticulationSpec(
        ROTATION, np.array([0.0, 0.0, 1.0]), default_range(ROTATION, 0.0), pivot=pivot
    )
    obj = ArticulatedObject(mesh, source_id="fridge", category="refrigerator")
    obj.add_joint(parts["door"], spec)
    return obj


def make_wheel_cart(normalize: bool = True, variant: int = 0) -> ArticulatedObject:
    """Cart body with one floating wheel disc; continuous rotation about the
    wheel's front-surface normal (+x)."""
    jitter = 0.0 if variant == 0 else 0.2
    rng = np.random.default_rng(3000 + variant)
    radius = 0.2 * (1.0 + jitter * rng.uniform(-1, 1))
    thickness = 0.09 * (1.0 + jitter * rng.uniform(-1, 1))
    b = MeshBuilder()
    b.add_box("body", [0.0, 0.0, 0.12], [0.5, 0.9, 0.3])
    wheel_center = np.array([0.32, 0.0, -0.12])
    v, f = cylinder_geometry(wheel_center, axis_dir=0, radius=radius, thickness=thickness)
    b.add_faces("wheel", v, f)
    mesh, parts = b.build(normalize=normalize)
    to_norm = _normalized_transform(mesh)[0] if normalize else (lambda p: np.asarray(p, float))
    spec = ArticulationSpec(
        ROTATION,
        np.array([1.0, 0.0, 0.0]),
        default_range(ROTATION, 0.0, continuous=True),
        pivot=to_norm(wheel_center),
        continuous=True,
    )
    obj = ArticulatedObject(mesh, source_id="cart", category="cart")
    obj.add_joint(parts["wheel"], spec)
    return obj


def make_double_cabinet(normalize: bool = True) -> ArticulatedObject:
    """Tall cabinet with two stacked drawers (two prismatic joints); used
    to exercise iterative multi-joint authoring."""
    b = MeshBuilder()
    body_size = np.array([0.8, 0.7, 1.0])
    t = 0.04
    for wc, ws in open_box_walls(np.zeros(3), body_size, open_axis=1, open_sign=1, thickness=t):
        b.add_box("body", wc, ws)
    b.add_box("shelf", [0.0, -t / 2.0, 0.0], [body_size[0] - 2 * t, body_size[1] - t, t])
    drawer_size = np.array([0.5, 0.6, 0.3])
    b.add_box("drawer_low", [0.0, 0.01, -0.26], drawer_size)
    b.add_box("drawer_high", [0.0, 0.01, 0.26], drawer_size)
    mesh, parts = b.build(normalize=normalize)
    _, scale = _normalized_transform(mesh) if normalize else (None, 1.0)
    obj = ArticulatedObject(mesh, source_id="double-cabinet", category="cabinet")
    for name in ("drawer_low", "drawer_high"):
        obj.add_joint(
            parts[name],
            ArticulationSpec(
                TRANSLATION,
                np.array([0.0, 1.0, 0.0]),
                default_range(TRANSLATION, float(drawer_size.max()) * scale),
            ),
        )
    return obj


def make_two_boxes(normalize: bool = True, share_edge: bool = True):
    """Two equal-height boxes meeting along one shared vertical edge at the
    origin; used by segmentation and boundary tests."""
    b = MeshBuilder()
    b.add_box("left", [-0.25, 0.0, -0.2], [0.5, 0.4, 0.4])
    b.add_box("right", [0.25, 0.0, 0.2], [0.5, 0.4, 0.4])
    if share_edge:
        # left corners (+x,+-y,+z) coincide with right corners (-x,+-y,-z)
        b.weld(8 + 0, 5)
        b.weld(8 + 2, 7)
    return b.build(normalize=normalize)


def make_multipart_scene(seed: int, n_parts: int = 3, normalize: bool = True):
    """Base slab plus n floating part boxes (distinct connected components,
    spatially separated, so the built-in features separate them cleanly)."""
    rng = np.random.default_rng(seed)
    b = MeshBuilder()
    b.add_box("base", [0.0, 0.0, -0.3], [1.4, 1.0, 0.12])
    slots = np.linspace(-0.5, 0.5, n_parts)
    for i in range(n_parts):
        size = rng.uniform(0.16, 0.3, size=3)
        center = np.array([slots[i], rng.uniform(-0.2, 0.2), rng.uniform(0.0, 0.2)])
        b.add_box(f"part{i}", center, size)
    return b.build(normalize=normalize)


def icosphere(center, radius: float, subdivisions: int = 2):
    """Subdivided icosahedron; used by render accuracy tests."""
    phi = (1 + 5 ** 0.5) / 2
    verts = [
        np.array(p, dtype=np.float64)
        for p in [
            (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
            (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
            (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
        ]
    ]
    verts = [v / np.linalg.norm(v) for v in verts]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    cache: dict[tuple[int, int], int] = {}

    def midpoint(a, bb):
        key = (min(a, bb), max(a, bb))
        if key not in cache:
            m = verts[a] + verts[bb]
            verts.append(m / np.linalg.norm(m))
            cache[key] = len(verts) - 1
        return cache[key]

    for _ in range(subdivisions):
        nxt = []
        for a, bb, c in faces:
            ab, bc, ca = midpoint(a, bb), midpoint(bb, c), midpoint(c, a)
            nxt += [(a, ab, ca), (bb, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = nxt
    v = np.asarray(verts) * radius + np.asarray(center, dtype=np.float64)
    return v, np.asarray(faces, dtype=np.int64)


def semantic_features(obj: ArticulatedObject, scale: float = 4.0, noise: float = 0.02, seed: int = 0):
    """Synthetic part-semantic feature field for a demo object.

    Stands in for an imported foundation-model field: each authored part
    (and the remainder) gets its own one-hot block at `scale`, plus the
    geometric descriptor and a little seeded noise. Welded-on parts that
    are geometrically flush (e.g. the fridge door) are only separable with
    such semantic features; the built-in descriptor alone cannot split
    coplanar surfaces.
    """
    from .segment import SOURCE_IMPORTED, FeatureField, builtin_features

    base = builtin_features(obj.mesh).values
    n_parts = len(obj.joints) + 1
    onehot = np.zeros((obj.mesh.n_faces, n_parts))
    onehot[:, 0] = scale
    for j, (part, _) in enumerate(obj.joints):
        onehot[part.face_ids, 0] = 0.0
        onehot[part.face_ids, j + 1] = scale
    rng = np.random.default_rng(seed)
    values = np.hstack([onehot, base]) + noise * rng.standard_normal(
        (obj.mesh.n_faces, n_parts + base.shape[1])
    )
    return FeatureField(values, source=SOURCE_IMPORTED)


def demo_objects(n: int = 10) -> list[ArticulatedObject]:
    """A deterministic mix of varied cabinets, fridges, and wheel carts."""
    out = []
    for i in range(n):
        kind = i % 3
        variant = i // 3
        if kind == 0:
            obj = make_cabinet(variant=variant)
        elif kind == 1:
            obj = make_fridge(variant=variant)
        else:
            obj = make_wheel_cart(variant=variant)
        obj.source_id = f"{obj.source_id}-{i:03d}"
        out.append(obj)
    return out
