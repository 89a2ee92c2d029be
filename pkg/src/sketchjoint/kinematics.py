"""Sweep volumes, collision-driven motion-range calibration, moving/static
decoupling, iso-surface extraction, and URDF export."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from xml.etree import ElementTree

import numpy as np
from scipy import ndimage

from . import model
from .complete import OccupancyGrid, dilate
from .errors import (
    BlockedJointError,
    EmptyGridError,
    InvalidInputError,
    SeparationError,
)
from .meshops import save_obj
from .model import ArticulationSpec, Mesh, apply_articulation

_STRUCT6 = ndimage.generate_binary_structure(3, 1)


@dataclass(frozen=True)
class SweepVolume:
    grid: OccupancyGrid
    samples: int


def _sample_values(spec: ArticulationSpec, samples: int) -> np.ndarray:
    if samples < 2:
        raise InvalidInputError("samples must be >= 2")
    return np.linspace(0.0, spec.range_max, samples)


def sweep_volume(part_grid: OccupancyGrid, spec: ArticulationSpec, samples: int = 64) -> SweepVolume:
    """Union of the moving part's occupancy over uniformly sampled joint
    values (value 0 included, so the sweep contains the rest pose)."""
    centers = part_grid.cell_centers()
    data = part_grid.data.copy()
    n = part_grid.resolution
    for value in _sample_values(spec, samples):
        if value == 0.0 or len(centers) == 0:
            continue
        moved = apply_articulation(spec, value, centers)
        idx = part_grid.world_to_index(moved)
        ok = np.all((idx >= 0) & (idx < n), axis=1)
        data[idx[ok, 0], idx[ok, 1], idx[ok, 2]] = True
    return SweepVolume(part_grid.with_data(data), samples)


def collision_scan(
    moving: OccupancyGrid,
    static_grid: OccupancyGrid,
    spec: ArticulationSpec,
    samples: int = 64,
) -> dict:
    """Scan joint values ascending; a collision at v means some moving cell
    center lands in an occupied static cell. Returns the largest
    collision-free prefix value and the first hit (None if fully free)."""
    if moving.resolution != static_grid.resolution:
        raise InvalidInputError("grid resolution mismatch")
    centers = moving.cell_centers()
    n = moving.resolution
    values = _sample_values(spec, samples)
    free_prefix = None
    first_hit = None
    for value in values:
        if len(centers) == 0:
            hit = False
        else:
            moved = centers if value == 0.0 else apply_articulation(spec, value, centers)
            idx = moving.world_to_index(moved)
            ok = np.all((idx >= 0) & (idx < n), axis=1)
            hit = bool(static_grid.data[idx[ok, 0], idx[ok, 1], idx[ok, 2]].any())
        if hit:
            first_hit = float(value)
            break
        free_prefix = float(value)
    return {
        "free_prefix_max": 0.0 if free_prefix is None else free_prefix,
        "first_hit": first_hit,
    }


def calibrate_range(
    spec: ArticulationSpec,
    moving: OccupancyGrid,
    static_grid: OccupancyGrid,
    samples: int = 64,
) -> ArticulationSpec:
    """Clamp range_max to the collision-free prefix of the trajectory.

    Continuous rotations are only valid if the whole annulus is free; a
    colliding continuous joint is reported as blocked rather than clamped.
    """
    scan = collision_scan(moving, static_grid, spec, samples)
    if spec.continuous:
        if scan["first_hit"] is not None:
            raise BlockedJointError(
                "continuous joint collides along its sweep",
                first_hit=scan["first_hit"],
            )
        return spec
    if scan["first_hit"] is None:
        return spec
    if scan["free_prefix_max"] <= 0.0:
        raise BlockedJointError("part cannot move from its rest pose", first_hit=0.0)
    return spec.with_range(min(spec.range_max, scan["free_prefix_max"]))


# ---------------------------------------------------------------------------
# Decoupling


def decouple_components(
    final: OccupancyGrid, shell: OccupancyGrid, moving_seed: OccupancyGrid
) -> dict:
    """Split the completed occupancy into disjoint moving/static grids.

    Components of `final` overlapping the seed become moving; cells also
    claimed by the known-static shell go to static, and the moving side is
    eroded at the contact interface so a slightly undersized drawer slides
    instead of jamming.
    """
    if final.resolution != shell.resolution or final.resolution != moving_seed.resolution:
        raise InvalidInputError("grid resolution mismatch")
    if (moving_seed.data & ~final.data).any():
        raise InvalidInputError("moving seed must be contained in the final grid")
    labels, n_labels = ndimage.label(final.data, structure=_STRUCT6)
    seed_labels = np.unique(labels[moving_seed.data & (labels > 0)])
    moving = np.isin(labels, seed_labels) & final.data
    static = final.data & ~moving

    # cells claimed by both the seeded component and the known-static shell
    static_claim = shell.data & ~moving_seed.data
    contested = moving & static_claim
    moving = moving & ~contested
    static = static | contested

    # erode the moving side at the contact interface
    interface = moving & dilate(static, 1)
    moving = moving & ~interface
    static_final = static  # eroded interface cells are dropped entirely

    # keep only moving components still touching the seed
    if moving.any():
        m_labels, _ = ndimage.label(moving, structure=_STRUCT6)
        keep = np.unique(m_labels[moving_seed.data & (m_labels > 0)])
        stray = moving & ~np.isin(m_labels, keep)
        moving = moving & np.isin(m_labels, keep)
        static_final = static_final | stray
    if not moving.any():
        raise SeparationError("moving grid empty after separation")
    if (moving & dilate(static_final, 1)).any():
        raise SeparationError("moving and static parts remain fused")
    return {
        "moving": final.with_data(moving),
        "static": final.with_data(static_final),
        "dropped_interface": int(interface.sum()),
    }


# ---------------------------------------------------------------------------
# Mesh extraction


def extract_mesh(grid: OccupancyGrid) -> Mesh:
    """Marching-cubes iso-surface at 0.5 over the box-filtered occupancy,
    vertices in world units.

    One-cell-thick walls peak at 3/9 under the 3^3 box filter and would
    vanish at the 0.5 level; such grids fall back to the raw occupancy,
    trading smoothness for existence.
    """
    if not grid.data.any():
        raise EmptyGridError("cannot extract a mesh from an empty grid")
    from skimage import measure

    filtered = ndimage.uniform_filter(grid.data.astype(np.float64), size=3, mode="constant")
    if filtered.max() <= 0.5:
        filtered = grid.data.astype(np.float64)
    padded = np.pad(filtered, 1, mode="constant")
    verts, faces, _normals, _vals = measure.marching_cubes(padded, level=0.5)
    cs = grid.cell_size
    world = grid.origin + (verts - 1 + 0.5) * cs
    return Mesh(world, faces.astype(np.int64))


def mesh_euler_characteristic(mesh: Mesh) -> int:
    from .meshops import edge_map

    return mesh.n_vertices - len(edge_map(mesh)) + mesh.n_faces


def mesh_volume(mesh: Mesh) -> float:
    """Signed volume via the divergence theorem."""
    c = mesh.face_corners()
    return float(np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum() / 6.0)


# ---------------------------------------------------------------------------
# URDF


@dataclass
class UrdfJoint:
    name: str
    joint_type: str  # revolute | prismatic | continuous
    child_link: str
    origin: np.ndarray
    axis: np.ndarray
    lower: float
    upper: float
    mesh_file: str


@dataclass
class UrdfAssembly:
    name: str
    base_mesh_file: str
    joints: list[UrdfJoint]


EFFORT_DEFAULT = 10.0
VELOCITY_DEFAULT = 1.0


def _fmt(x: float) -> str:
    return "%.9g" % float(x)


def _fmt3(v) -> str:
    return " ".join(_fmt(x) for x in v)


def spec_to_joint_type(spec: ArticulationSpec) -> str:
    if spec.motion_type == model.TRANSLATION:
        return "prismatic"
    return "continuous" if spec.continuous else "revolute"


def export_urdf(
    base: Mesh,
    movables: list[tuple[Mesh, ArticulationSpec]],
    out_dir: str | Path,
    name: str = "model",
) -> UrdfAssembly:
    """Write model.urdf plus per-link OBJ files.

    Joint frames sit at the pivot for rotations (child mesh re-expressed
    relative to it) and at the base origin for prismatic joints. All
    geometry is de-normalized back to source units via the base mesh's
    stored transform.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scale = base.denorm_scale
    offset = base.denorm_offset

    def denorm(points):
        return np.asarray(points) * scale + offset

    base_file = "base_link.obj"
    base_out = Mesh(denorm(base.vertices), base.faces)
    (out / base_file).write_text(save_obj(base_out))

    joints: list[UrdfJoint] = []
    names = {"base_link"}
    for i, (mesh, spec) in enumerate(movables):
        link = f"part_{i}"
        if link in names:
            raise InvalidInputError(f"duplicate link name {link}")
        names.add(link)
        jtype = spec_to_joint_type(spec)
        if jtype == "prismatic":
            origin = np.zeros(3)
            child_vertices = denorm(mesh.vertices)
        else:
            origin = denorm(spec.pivot)
            child_vertices = denorm(mesh.vertices) - origin
        mesh_file = f"{link}.obj"
        (out / mesh_file).write_text(save_obj(Mesh(child_vertices, mesh.faces)))
        upper = spec.range_max * (scale if spec.motion_type == model.TRANSLATION else 1.0)
        joints.append(
            UrdfJoint(
                name=f"joint_{i}",
                joint_type=jtype,
                child_link=link,
                origin=origin,
                axis=spec.axis.copy(),
                lower=0.0,
                upper=float(upper),
                mesh_file=mesh_file,
            )
        )
    assembly = UrdfAssembly(name, base_file, joints)
    (out / "model.urdf").write_text(urdf_xml(assembly))
    return assembly


def urdf_xml(assembly: UrdfAssembly) -> str:
    """Canonical URDF text: 2-space indent, fixed attribute order."""
    lines = [f'<robot name="{assembly.name}">']
    lines += _link_xml("base_link", assembly.base_mesh_file)
    for j in assembly.joints:
        lines += _link_xml(j.child_link, j.mesh_file)
        lines.append(f'  <joint name="{j.name}" type="{j.joint_type}">')
        lines.append(f'    <origin xyz="{_fmt3(j.origin)}" rpy="0 0 0"/>')
        lines.append('    <parent link="base_link"/>')
        lines.append(f'    <child link="{j.child_link}"/>')
        lines.append(f'    <axis xyz="{_fmt3(j.axis)}"/>')
        if j.joint_type != "continuous":
            lines.append(
                f'    <limit lower="{_fmt(j.lower)}" upper="{_fmt(j.upper)}"'
                f' effort="{_fmt(EFFORT_DEFAULT)}" velocity="{_fmt(VELOCITY_DEFAULT)}"/>'
            )
        lines.append("  </joint>")
    lines.append("</robot>")
    return "\n".join(lines) + "\n"


def _link_xml(name: str, mesh_file: str) -> list[str]:
    return [
        f'  <link name="{name}">',
        "    <visual>",
        "      <geometry>",
        f'        <mesh filename="{mesh_file}"/>',
        "      </geometry>",
        "    </visual>",
        "    <collision>",
        "      <geometry>",
        f'        <mesh filename="{mesh_file}"/>',
        "      </geometry>",
        "    </collision>",
        f"  </link>",
    ]


def parse_urdf(text: str) -> UrdfAssembly:
    """Parse the exporter's URDF dialect back into an assembly."""
    root = ElementTree.fromstring(text)
    if root.tag != "robot":
        raise InvalidInputError("not a URDF robot document")
    links = {}
    for link in root.findall("link"):
        mesh = link.find("./visual/geometry/mesh")
        links[link.get("name")] = mesh.get("filename") if mesh is not None else None
    joints = []
    for j in root.findall("joint"):
        origin = j.find("origin")
        axis = j.find("axis")
        limit = j.find("limit")
        child = j.find("child").get("link")
        jtype = j.get("type")
        upper = (
            float(limit.get("upper")) if limit is not None else 2.0 * math.pi
        )
        joints.append(
            UrdfJoint(
                name=j.get("name"),
                joint_type=jtype,
                child_link=child,
                origin=np.array([float(x) for x in origin.get("xyz").split()]),
                axis=np.array([float(x) for x in axis.get("xyz").split()]),
                lower=float(limit.get("lower")) if limit is not None else 0.0,
                upper=upper,
                mesh_file=links[child],
            )
        )
    return UrdfAssembly(root.get("name"), links["base_link"], joints)
