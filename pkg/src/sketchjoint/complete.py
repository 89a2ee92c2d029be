"""Voxel/latent grids and structure-preserving masked flow completion.

The sampler integrates a velocity field from noise (t=0) to data (t=1)
with Euler steps, while anchoring masked cells to their analytic linear
trajectory at each step's target time: shell cells follow
t*Z_shell + (1-t)*eps, forbidden cells follow t*Z_empty + (1-t)*eps.
At t=1 the anchored regions therefore equal Z_shell / Z_empty exactly,
for any velocity backend - that exactness is this module's core guarantee
and is what the acceptance suite asserts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import EmptyGridError, InvalidInputError
from .model import ArticulationSpec, Mesh, Part

DEFAULT_GEOMETRY_RES = 64
DEFAULT_LATENT_RES = 16
DEFAULT_CHANNELS = 8

_STRUCT6 = ndimage.generate_binary_structure(3, 1)  # 6-neighborhood


@dataclass(frozen=True)
class OccupancyGrid:
    """Binary N^3 grid over an axis-aligned cube in normalized object space.

    world = origin + (index + 0.5) * cell for cell centers.
    """

    data: np.ndarray
    origin: np.ndarray = field(default_factory=lambda: np.full(3, -0.55))
    extent: float = 1.1

    def __post_init__(self):
        d = np.asarray(self.data, dtype=bool)
        if d.ndim != 3 or len(set(d.shape)) != 1:
            raise InvalidInputError("occupancy grid must be cubic (N, N, N)")
        if d.shape[0] < 8:
            raise InvalidInputError("grid resolution must be >= 8")
        object.__setattr__(self, "data", d)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64))
        if not (self.extent > 0):
            raise InvalidInputError("grid extent must be positive")

    @property
    def resolution(self) -> int:
        return self.data.shape[0]

    @property
    def cell_size(self) -> float:
        return self.extent / self.resolution

    def cell_centers(self, mask: np.ndarray | None = None) -> np.ndarray:
        idx = np.argwhere(self.data if mask is None else mask)
        return self.origin + (idx + 0.5) * self.cell_size

    def world_to_index(self, points: np.ndarray) -> np.ndarray:
        return np.floor((np.atleast_2d(points) - self.origin) / self.cell_size).astype(
            np.int64
        )

    def count(self) -> int:
        return int(self.data.sum())

    def with_data(self, data: np.ndarray) -> "OccupancyGrid":
        return OccupancyGrid(data, self.origin.copy(), self.extent)

    @staticmethod
    def empty(resolution: int = DEFAULT_GEOMETRY_RES, origin=None, extent: float = 1.1) -> "OccupancyGrid":
        if origin is None:
            origin = np.full(3, -extent / 2.0)
        return OccupancyGrid(
            np.zeros((resolution,) * 3, dtype=bool), np.asarray(origin), extent
        )


@dataclass(frozen=True)
class LatentGrid:
    """C x N^3 float32 latent volume."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float32)
        if d.ndim != 4 or len(set(d.shape[1:])) != 1:
            raise InvalidInputError("latent grid must be (C, N, N, N)")
        if not np.all(np.isfinite(d)):
            raise InvalidInputError("latent grid contains non-finite values")
        object.__setattr__(self, "data", d)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def resolution(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class CompletionConfig:
    steps: int = 25
    seed: int = 0
    k_max: int = 15
    growth_threshold: float = 0.005  # fraction of grid cells
    erosion_radius: int = 1
    latent_resolution: int = DEFAULT_LATENT_RES
    channels: int = DEFAULT_CHANNELS

    def __post_init__(self):
        if self.steps < 2:
            raise InvalidInputError("steps must be >= 2")
        if self.k_max < 1:
            raise InvalidInputError("k_max must be >= 1")


# ---------------------------------------------------------------------------
# Generative backends


class MockLinearBackend:
    """Exact conditional-flow oracle toward a target occupancy.

    On the linear trajectory Z_t = t*Z_target + (1-t)*eps the velocity
    (Z_target - Z_t)/(1 - t) equals Z_target - eps; off-trajectory states
    (introduced by mask fusion) are pulled back. Euler integration of this
    field reaches Z_target exactly.
    """

    def __init__(self, target: OccupancyGrid, channels: int = DEFAULT_CHANNELS):
        self.channels = channels
        self.target_latent = self.encode(target)

    def encode(self, grid: OccupancyGrid) -> LatentGrid:
        data = np.repeat(
            grid.data.astype(np.float32)[None], self.channels, axis=0
        )
        return LatentGrid(data)

    def decode(self, latent: LatentGrid) -> np.ndarray:
        return latent.data.mean(axis=0) > 0.5

    def velocity(self, z_t: LatentGrid, t: float, condition: bytes | None = None) -> LatentGrid:
        remaining = max(1.0 - t, 1e-9)
        return LatentGrid((self.target_latent.data - z_t.data) / remaining)


class MockNoisyBackend(MockLinearBackend):
    """Linear oracle plus seeded per-step perturbation."""

    def __init__(self, target: OccupancyGrid, channels: int = DEFAULT_CHANNELS,
                 sigma: float = 0.25, seed: int = 0):
        super().__init__(target, channels)
        self.sigma = sigma
        self.seed = seed

    def velocity(self, z_t: LatentGrid, t: float, condition: bytes | None = None) -> LatentGrid:
        base = super().velocity(z_t, t, condition)
        step_key = int(round(t * 1_000_003))
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, step_key]))
        noise = rng.standard_normal(base.data.shape).astype(np.float32)
        return LatentGrid(base.data + self.sigma * noise)


class ConstantVelocityBackend:
    """v = const everywhere; exercises mask exactness with a generator that
    actively fights the anchoring."""

    def __init__(self, channels: int = DEFAULT_CHANNELS, value: float = 1.0):
        self.channels = channels
        self.value = value

    def encode(self, grid: OccupancyGrid) -> LatentGrid:
        return LatentGrid(
            np.repeat(grid.data.astype(np.float32)[None], self.channels, axis=0)
        )

    def decode(self, latent: LatentGrid) -> np.ndarray:
        return latent.data.mean(axis=0) > 0.5

    def velocity(self, z_t: LatentGrid, t: float, condition: bytes | None = None) -> LatentGrid:
        return LatentGrid(np.full_like(z_t.data, self.value))


class TrellisAdapterBackend:
    """External-process velocity field over the tensor-block protocol.

    Input block: Z_t as [C, N, N, N] with {"t": t} in meta plus the opaque
    condition bytes written alongside; output: velocity block, same shape.
    Optional; encode/decode stay the mock identity mapping unless the
    adapter overrides them out-of-band.
    """

    def __init__(self, command: tuple[str, ...], channels: int = DEFAULT_CHANNELS,
                 timeout_s: float = 120.0):
        self.command = tuple(command)
        self.channels = channels
        self.timeout_s = timeout_s

    def encode(self, grid: OccupancyGrid) -> LatentGrid:
        return LatentGrid(
            np.repeat(grid.data.astype(np.float32)[None], self.channels, axis=0)
        )

    def decode(self, latent: LatentGrid) -> np.ndarray:
        return latent.data.mean(axis=0) > 0.5

    def velocity(self, z_t: LatentGrid, t: float, condition: bytes | None = None) -> LatentGrid:
        import subprocess
        import tempfile
        from pathlib import Path

        from .errors import AdapterError
        from .render import read_tensor_block, write_tensor_block

        with tempfile.TemporaryDirectory(prefix="sketchjoint-trellis-") as tmp:
            inp = Path(tmp) / "z_t.tnsr"
            cond = Path(tmp) / "condition.bin"
            out = Path(tmp) / "velocity.tnsr"
            inp.write_bytes(write_tensor_block(z_t.data, {"t": float(t)}))
            cond.write_bytes(condition or b"")
            try:
                proc = subprocess.run(
                    [*self.command, str(inp), str(cond), str(out)],
                    timeout=self.timeout_s,
                    capture_output=True,
                )
            except subprocess.TimeoutExpired:
                raise AdapterError(f"generative adapter timed out after {self.timeout_s}s")
            if proc.returncode != 0 or not out.exists():
                raise AdapterError(
                    f"generative adapter failed (exit {proc.returncode})"
                )
            arr, _ = read_tensor_block(out.read_bytes())
        if arr.shape != z_t.data.shape:
            raise AdapterError(f"velocity shape {arr.shape} != {z_t.data.shape}")
        return LatentGrid(arr)


# ---------------------------------------------------------------------------
# Voxelization


def voxelize(mesh: Mesh, part: Part | None, resolution: int,
             origin=None, extent: float = 1.1) -> OccupancyGrid:
    """Cell-center occupancy: parity ray casting with a 3-axis majority
    vote for closed meshes; open meshes fall back to a surface band (any
    triangle overlapping the cell)."""
    grid = OccupancyGrid.empty(resolution, origin, extent)
    face_ids = part.face_ids if part is not None else np.arange(mesh.n_faces)
    if len(face_ids) == 0:
        return grid
    tris = mesh.face_corners(face_ids)
    if _is_closed(mesh, face_ids):
        data = _voxelize_solid(tris, grid)
    else:
        data = _voxelize_band(tris, grid)
    return grid.with_data(data)


def _is_closed(mesh: Mesh, face_ids) -> bool:
    from .meshops import edge_map

    sel = set(int(i) for i in face_ids)
    counts: dict[tuple[int, int], int] = {}
    for edge, fids in edge_map(mesh).items():
        inside = sum(1 for f in fids if f in sel)
        if inside:
            counts[edge] = inside
    return all(c % 2 == 0 for c in counts.values())


def _voxelize_solid(tris: np.ndarray, grid: OccupancyGrid) -> np.ndarray:
    n = grid.resolution
    votes = np.zeros((n, n, n), dtype=np.int8)
    centers_1d = grid.origin[0] + (np.arange(n) + 0.5) * grid.cell_size
    # tiny deterministic shift dodges exact edge/plane hits
    eps = 1e-9 * grid.cell_size
    for axis in range(3):
        inside = _parity_along_axis(tris, grid, axis, centers_1d + eps)
        votes += inside.astype(np.int8)
    return votes >= 2


def _parity_along_axis(tris, grid, axis, centers_1d) -> np.ndarray:
    """Parity of triangle crossings along +axis rays through cell centers."""
    n = grid.resolution
    a1, a2 = (axis + 1) % 3, (axis + 2) % 3
    # ray grid over the two transverse axes
    u = grid.origin[a1] + (np.arange(n) + 0.5) * grid.cell_size + 1e-9 * grid.cell_size
    v = grid.origin[a2] + (np.arange(n) + 0.5) * grid.cell_size + 2e-9 * grid.cell_size
    uu, vv = np.meshgrid(u, v, indexing="ij")
    crossings = np.zeros((n, n, n), dtype=np.int32)  # indexed [u, v, cell-along-axis]

    p0, p1, p2 = tris[:, 0], tris[:, 1], tris[:, 2]
    for t0, t1, t2 in zip(p0, p1, p2):
        lo_u = min(t0[a1], t1[a1], t2[a1])
        hi_u = max(t0[a1], t1[a1], t2[a1])
        lo_v = min(t0[a2], t1[a2], t2[a2])
        hi_v = max(t0[a2], t1[a2], t2[a2])
        iu = np.nonzero((u >= lo_u) & (u <= hi_u))[0]
        iv = np.nonzero((v >= lo_v) & (v <= hi_v))[0]
        if len(iu) == 0 or len(iv) == 0:
            continue
        su, sv = np.meshgrid(u[iu], v[iv], indexing="ij")
        # 2D barycentric in the transverse plane
        d00 = t1[a1] - t0[a1]
        d01 = t1[a2] - t0[a2]
        d10 = t2[a1] - t0[a1]
        d11 = t2[a2] - t0[a2]
        det = d00 * d11 - d01 * d10
        if abs(det) < 1e-15:
            continue  # triangle edge-on to the ray direction
        eu = su - t0[a1]
        ev = sv - t0[a2]
        b1 = (eu * d11 - ev * d10) / det
        b2 = (ev * d00 - eu * d01) / det
        hit = (b1 >= 0) & (b2 >= 0) & (b1 + b2 <= 1)
        if not hit.any():
            continue
        z_hit = (
            t0[axis]
            + b1 * (t1[axis] - t0[axis])
            + b2 * (t2[axis] - t0[axis])
        )
        # crossing is "behind" every cell center beyond it along the axis
        cell_after = np.searchsorted(centers_1d, z_hit[hit])
        hu, hv = np.nonzero(hit)
        for k, ca in enumerate(cell_after):
            if ca < n:
                crossings[iu[hu[k]], iv[hv[k]], ca:] += 1
    inside = (crossings % 2) == 1
    # reorder [u, v, along] -> grid [x, y, z]
    order = np.argsort([a1, a2, axis])
    return np.transpose(inside, axes=order)


def _voxelize_band(tris: np.ndarray, grid: OccupancyGrid) -> np.ndarray:
    n = grid.resolution
    data = np.zeros((n, n, n), dtype=bool)
    cs = grid.cell_size
    half = np.full(3, cs / 2.0)
    for tri in tris:
        lo = grid.world_to_index(tri.min(axis=0) - 1e-9)[0]
        hi = grid.world_to_index(tri.max(axis=0) + 1e-9)[0]
        lo = np.clip(lo, 0, n - 1)
        hi = np.clip(hi, 0, n - 1)
        for i in range(lo[0], hi[0] + 1):
            for j in range(lo[1], hi[1] + 1):
                for k in range(lo[2], hi[2] + 1):
                    center = grid.origin + (np.array([i, j, k]) + 0.5) * cs
                    if _tri_box_overlap(tri, center, half):
                        data[i, j, k] = True
    return data


def _tri_box_overlap(tri: np.ndarray, center: np.ndarray, half: np.ndarray) -> bool:
    """Separating-axis test between a triangle and an axis-aligned box.

    Touching counts as overlap: a panel lying exactly on a cell boundary
    must land in at least one adjacent cell regardless of fp rounding.
    """
    v = tri - center
    eps = 1e-9 * float(half.max())
    for i in range(3):
        if max(v[0][i], v[1][i], v[2][i]) < -half[i] - eps or min(
            v[0][i], v[1][i], v[2][i]
        ) > half[i] + eps:
            return False
    e = [v[1] - v[0], v[2] - v[1], v[0] - v[2]]
    n = np.cross(e[0], e[1])
    d = float(n @ v[0])
    r = float(np.abs(n) @ half)
    scale = float(np.abs(n).max()) + 1e-30
    if abs(d) > r + eps * scale:
        return False
    for i in range(3):
        for j in range(3):
            axis = np.cross(_unit_axis(j), e[i])
            if np.allclose(axis, 0):
                continue
            p = v @ axis
            r = float(np.abs(axis) @ half)
            tol = eps * (float(np.abs(axis).max()) + 1e-30)
            if p.min() > r + tol or p.max() < -r - tol:
                return False
    return True


def _unit_axis(i: int) -> np.ndarray:
    a = np.zeros(3)
    a[i] = 1.0
    return a


# ---------------------------------------------------------------------------
# Flow fusion (masked sampling)


def analytic_state(z_shell: LatentGrid, eps: LatentGrid, t: float) -> LatentGrid:
    """Linear reference trajectory: t*Z_shell + (1-t)*eps, elementwise."""
    if z_shell.data.shape != eps.data.shape:
        raise InvalidInputError("analytic_state shape mismatch")
    if not (0.0 <= t <= 1.0):
        raise InvalidInputError(f"t={t} outside [0, 1]")
    t32 = np.float32(t)
    return LatentGrid(t32 * z_shell.data + (np.float32(1.0) - t32) * eps.data)


def fused_step(
    z_t: LatentGrid,
    t: float,
    dt: float,
    backend,
    z_shell: LatentGrid,
    z_empty: LatentGrid,
    eps: LatentGrid,
    m_occ: np.ndarray,
    m_void: np.ndarray,
    condition: bytes | None = None,
) -> LatentGrid:
    """One Euler step with mask fusion.

    Generative cells advance by dt * velocity; occupied/forbidden cells are
    anchored at the analytic trajectory evaluated at the TARGET time t+dt,
    which makes the final state exact at t=1.
    """
    m_occ = np.asarray(m_occ, dtype=bool)
    m_void = np.asarray(m_void, dtype=bool)
    if m_occ.shape != z_t.data.shape[1:] or m_void.shape != m_occ.shape:
        raise InvalidInputError("mask shape mismatch")
    if (m_occ & m_void).any():
        raise InvalidInputError("M_occ and M_void overlap")
    v = backend.velocity(z_t, t, condition)
    if v.data.shape != z_t.data.shape:
        raise InvalidInputError("backend velocity shape mismatch")
    z_gen = z_t.data + np.float32(dt) * v.data
    t_next = min(t + dt, 1.0)
    shell_state = analytic_state(z_shell, eps, t_next).data
    empty_state = analytic_state(z_empty, eps, t_next).data
    occ = m_occ[None]
    void = m_void[None]
    out = np.where(occ, shell_state, np.where(void, empty_state, z_gen))
    return LatentGrid(out)


def run_flow(
    shell: OccupancyGrid,
    m_void: np.ndarray,
    backend,
    config: CompletionConfig,
    condition: bytes | None = None,
) -> LatentGrid:
    """Integrate t: 0 -> 1 from seeded noise with mask fusion at every step."""
    z_shell = backend.encode(shell)
    z_empty = backend.encode(shell.with_data(np.zeros_like(shell.data)))
    rng = np.random.default_rng(config.seed)
    eps = LatentGrid(rng.standard_normal(z_shell.data.shape).astype(np.float32))
    m_occ = shell.data
    z = eps
    dt = 1.0 / config.steps
    for k in range(config.steps):
        z = fused_step(
            z, k * dt, dt, backend, z_shell, z_empty, eps, m_occ, m_void, condition
        )
    return z


# ---------------------------------------------------------------------------
# Masks


def interior_cavity(shell: OccupancyGrid, min_enclosed: int = 5) -> np.ndarray:
    """Cells functioning as the shell's internal cavity.

    A free cell counts as interior when shell occupancy blocks it along at
    least `min_enclosed` of the 6 axis directions. This covers both sealed
    hollows (blocked 6/6) and open-front bays like a cabinet's drawer slot
    (blocked 5/6); a boundary-flood-fill definition would claim an open bay
    is outside.
    """
    occ = shell.data
    free = ~occ
    enclosed = np.zeros(occ.shape, dtype=np.int8)
    for axis in range(3):
        fwd = np.logical_or.accumulate(occ, axis=axis)
        rev = np.flip(
            np.logical_or.accumulate(np.flip(occ, axis=axis), axis=axis), axis=axis
        )
        enclosed += fwd.astype(np.int8) + rev.astype(np.int8)
    return free & (enclosed >= min_enclosed)


def compute_void_mask(
    shell: OccupancyGrid, sweep: OccupancyGrid, interior: OccupancyGrid | None = None
) -> np.ndarray:
    """Forbidden region: the complement of shell + motion sweep + cavity."""
    if sweep.resolution != shell.resolution:
        raise InvalidInputError("sweep resolution mismatch")
    inter = interior.data if interior is not None else interior_cavity(shell)
    valid = shell.data | sweep.data | inter
    return ~valid


def erode(mask: np.ndarray, radius: int = 1) -> np.ndarray:
    """6-neighborhood binary erosion applied `radius` times."""
    if radius < 0:
        raise InvalidInputError("erosion radius must be >= 0")
    m = np.asarray(mask, dtype=bool)
    if radius == 0:
        return m.copy()
    return ndimage.binary_erosion(m, structure=_STRUCT6, iterations=radius)


def dilate(mask: np.ndarray, radius: int = 1) -> np.ndarray:
    m = np.asarray(mask, dtype=bool)
    if radius == 0:
        return m.copy()
    return ndimage.binary_dilation(m, structure=_STRUCT6, iterations=radius)


# ---------------------------------------------------------------------------
# Iterative growth


@dataclass
class CompletionResult:
    occupancy: OccupancyGrid
    growth_per_iteration: list[int]
    converged: bool
    iterations: int


def iterative_complete(
    shell: OccupancyGrid,
    joint: ArticulationSpec | None,
    moving_part_grid: OccupancyGrid,
    backend,
    config: CompletionConfig,
    condition: bytes | None = None,
    cancel=None,
    on_iteration=None,
) -> CompletionResult:
    """Repeated flow passes, feeding each pass's output in as the next
    shell, with the loose (eroded) forbidden mask during generation.

    The valid zone is fixed by the ORIGINAL shell's cavity plus the moving
    part's sweep; growth is monotone because anchored cells reproduce
    exactly. Fresh seeded noise per pass (seed, k).
    """
    from .kinematics import sweep_volume

    if joint is not None:
        sweep = sweep_volume(moving_part_grid, joint).grid
    else:
        sweep = moving_part_grid
    m_void = compute_void_mask(shell, sweep)
    m_void_loose = erode(m_void, config.erosion_radius)

    current = shell
    growth_log: list[int] = []
    converged = False
    threshold = config.growth_threshold * current.data.size
    iterations = 0
    for k in range(config.k_max):
        if cancel is not None and cancel():
            break
        pass_config = CompletionConfig(
            steps=config.steps,
            seed=int(np.random.SeedSequence([config.seed, k]).generate_state(1)[0]),
            k_max=config.k_max,
            growth_threshold=config.growth_threshold,
            erosion_radius=config.erosion_radius,
            latent_resolution=config.latent_resolution,
            channels=config.channels,
        )
        z1 = run_flow(current, m_void_loose, backend, pass_config, condition)
        decoded = backend.decode(z1)
        new_data = decoded | current.data  # anchored cells already persist
        grown = int(new_data.sum() - current.data.sum())
        growth_log.append(grown)
        current = current.with_data(new_data)
        iterations = k + 1
        if on_iteration is not None:
            on_iteration(k, grown, current)
        if grown < threshold:
            converged = True
            break
    return CompletionResult(current, growth_log, converged, iterations)


def prune_strict(
    generated: OccupancyGrid,
    shell: OccupancyGrid,
    sweep: OccupancyGrid,
    interior: OccupancyGrid | None = None,
) -> OccupancyGrid:
    """Strict kinematic filter: intersect with the UN-eroded envelope."""
    if generated.resolution != shell.resolution:
        raise InvalidInputError("resolution mismatch")
    inter = interior.data if interior is not None else interior_cavity(shell)
    envelope = shell.data | sweep.data | inter
    return generated.with_data(generated.data & envelope)


def grid_to_tensor_block(grid: OccupancyGrid, meta: dict | None = None) -> bytes:
    from .render import write_tensor_block

    m = {"origin": [float(x) for x in grid.origin], "extent": float(grid.extent)}
    m.update(meta or {})
    return write_tensor_block(grid.data.astype(np.float32)[None], m)


def grid_from_tensor_block(data: bytes) -> OccupancyGrid:
    from .render import read_tensor_block

    arr, meta = read_tensor_block(data)
    if arr.ndim != 4 or arr.shape[0] != 1:
        raise EmptyGridError(f"expected [1, N, N, N] grid block, got {list(arr.shape)}")
    return OccupancyGrid(
        arr[0] > 0.5,
        np.asarray(meta.get("origin", [-0.55, -0.55, -0.55])),
        float(meta.get("extent", 1.1)),
    )
