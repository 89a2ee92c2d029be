"""Pinhole camera, software rasterization of depth/normal/face-id buffers,
back-projection, and the bit-exact tensor block file format.

The rasterizer is deliberately CPU-only and deterministic: pixel centers at
(x+0.5, y+0.5), a top-left style fill rule for exactly-on-edge centers, flat
per-face normals, and z-test ties resolved by lower face id.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInputError, NoSurfaceError, TensorFormatError
from .model import Mesh, unit

BACKGROUND_FACE = -1
TENSOR_MAGIC = b"S2ATNSR1"


@dataclass(frozen=True)
class Camera:
    """Right-handed pinhole camera looking along -z in camera space.

    ``principal`` defaults to the image center; focal_crop produces cameras
    with off-center principal points. Focal length in pixels derives from
    the vertical field of view and image height.
    """

    eye: np.ndarray
    target: np.ndarray
    up: np.ndarray
    vfov: float
    width: int
    height: int
    principal: tuple[float, float] | None = None

    def __post_init__(self):
        eye = np.asarray(self.eye, dtype=np.float64)
        target = np.asarray(self.target, dtype=np.float64)
        up = np.asarray(self.up, dtype=np.float64)
        if np.allclose(eye, target):
            raise InvalidInputError("camera eye must differ from target")
        if not (0.0 < self.vfov < np.pi):
            raise InvalidInputError("vfov must be in (0, pi)")
        object.__setattr__(self, "eye", eye)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "up", unit(up))
        if self.principal is None:
            object.__setattr__(
                self, "principal", (self.width / 2.0, self.height / 2.0)
            )
        else:
            object.__setattr__(
                self, "principal", (float(self.principal[0]), float(self.principal[1]))
            )

    @property
    def focal_px(self) -> float:
        return (self.height / 2.0) / np.tan(self.vfov / 2.0)

    def rotation(self) -> np.ndarray:
        """World-to-camera rotation; rows are the camera x/y/z axes."""
        forward = unit(self.target - self.eye)
        z = -forward
        x = np.cross(forward, self.up)
        n = np.linalg.norm(x)
        if n < 1e-12:
            raise InvalidInputError("up vector parallel to view direction")
        x = x / n
        y = np.cross(z, x)
        return np.stack([x, y, z])

    def view_dir(self) -> np.ndarray:
        return unit(self.target - self.eye)

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(points) - self.eye) @ self.rotation().T

    def to_world(self, points_cam: np.ndarray) -> np.ndarray:
        return np.atleast_2d(points_cam) @ self.rotation() + self.eye

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """World points -> (pixel xy, depth along -z). Depth <= 0 means the
        point is behind the camera; its pixel coords are unreliable."""
        cam = self.to_camera(points)
        depth = -cam[:, 2]
        cx, cy = self.principal
        f = self.focal_px
        with np.errstate(divide="ignore", invalid="ignore"):
            u = cx + f * cam[:, 0] / np.where(depth != 0, depth, np.nan)
            v = cy - f * cam[:, 1] / np.where(depth != 0, depth, np.nan)
        return np.stack([u, v], axis=1), depth

    def pixel_ray_cam(self, px: np.ndarray) -> np.ndarray:
        """Camera-space ray directions through pixel centers, z = -1 plane."""
        px = np.atleast_2d(np.asarray(px, dtype=np.float64))
        cx, cy = self.principal
        f = self.focal_px
        d = np.stack(
            [
                (px[:, 0] + 0.5 - cx) / f,
                -(px[:, 1] + 0.5 - cy) / f,
                -np.ones(len(px)),
            ],
            axis=1,
        )
        return d

    def to_json_dict(self) -> dict:
        return {
            "eye": [float(x) for x in self.eye],
            "target": [float(x) for x in self.target],
            "up": [float(x) for x in self.up],
            "vfov": float(self.vfov),
            "width": int(self.width),
            "height": int(self.height),
            "principal": [float(self.principal[0]), float(self.principal[1])],
        }

    @staticmethod
    def from_json_dict(d: dict) -> "Camera":
        return Camera(
            eye=np.asarray(d["eye"], dtype=np.float64),
            target=np.asarray(d["target"], dtype=np.float64),
            up=np.asarray(d["up"], dtype=np.float64),
            vfov=float(d["vfov"]),
            width=int(d["width"]),
            height=int(d["height"]),
            principal=tuple(d["principal"]) if d.get("principal") else None,
        )


@dataclass(frozen=True)
class GBuffer:
    """Per-pixel depth (camera -z distance, 0 = background), camera-space
    unit normals (zero = background), and face ids (-1 = background)."""

    depth: np.ndarray
    normal: np.ndarray
    face_id: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape

    def foreground(self) -> np.ndarray:
        return self.face_id != BACKGROUND_FACE


def render_gbuffer(mesh: Mesh, camera: Camera) -> GBuffer:
    """Z-buffered rasterization with flat per-face normals.

    Normals are flipped toward the viewer (positive camera-space z) so the
    visible side's orientation is reported regardless of winding.
    """
    H, W = camera.height, camera.width
    depth = np.zeros((H, W), dtype=np.float64)
    zbuf = np.full((H, W), np.inf, dtype=np.float64)
    normal = np.zeros((H, W, 3), dtype=np.float64)
    face_id = np.full((H, W), BACKGROUND_FACE, dtype=np.int32)
    if mesh.n_faces == 0:
        return GBuffer(depth, normal, face_id)

    R = camera.rotation()
    cam_pts = (mesh.vertices - camera.eye) @ R.T
    tri_cam = cam_pts[mesh.faces]  # (M, 3, 3)
    z = tri_cam[:, :, 2]
    # Cull faces touching or behind the eye plane; partial clipping is not
    # needed for object-centric cameras outside the geometry.
    ok = np.all(z < -1e-9, axis=1)

    cx, cy = camera.principal
    f = camera.focal_px
    inv_depth = 1.0 / (-z)
    sx = cx + f * tri_cam[:, :, 0] * inv_depth
    sy = cy - f * tri_cam[:, :, 1] * inv_depth

    normals_world = mesh.face_normals()
    normals_cam = normals_world @ R.T
    flip = normals_cam[:, 2] < 0
    normals_cam[flip] = -normals_cam[flip]

    for fid in np.nonzero(ok)[0]:
        ax, ay = sx[fid, 0], sy[fid, 0]
        bx, by = sx[fid, 1], sy[fid, 1]
        cx2, cy2 = sx[fid, 2], sy[fid, 2]
        area2 = (bx - ax) * (cy2 - ay) - (by - ay) * (cx2 - ax)
        if area2 == 0.0:
            continue
        if area2 < 0.0:
            bx, by, cx2, cy2 = cx2, cy2, bx, by
            iv = (0, 2, 1)
            area2 = -area2
        else:
            iv = (0, 1, 2)

        x0 = max(int(np.floor(min(ax, bx, cx2) - 0.5)), 0)
        x1 = min(int(np.ceil(max(ax, bx, cx2) - 0.5)), W - 1)
        y0 = max(int(np.floor(min(ay, by, cy2) - 0.5)), 0)
        y1 = min(int(np.ceil(max(ay, by, cy2) - 0.5)), H - 1)
        if x1 < x0 or y1 < y0:
            continue

        xs = np.arange(x0, x1 + 1) + 0.5
        ys = np.arange(y0, y1 + 1) + 0.5
        px, py = np.meshgrid(xs, ys)

        # Edge functions; inside = w > 0, boundary handled by fill rule.
        w0 = (cx2 - bx) * (py - by) - (cy2 - by) * (px - bx)
        w1 = (ax - cx2) * (py - cy2) - (ay - cy2) * (px - cx2)
        w2 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)

        inside = np.ones(px.shape, dtype=bool)
        for w, ex, ey in (
            (w0, cx2 - bx, cy2 - by),
            (w1, ax - cx2, ay - cy2),
            (w2, bx - ax, by - ay),
        ):
            on_edge_ok = (ey > 0) | ((ey == 0) & (ex < 0))
            inside &= (w > 0) | ((w == 0) & on_edge_ok)
        if not inside.any():
            continue

        l0 = w0 / area2
        l1 = w1 / area2
        l2 = w2 / area2
        iz = (
            l0 * inv_depth[fid, iv[0]]
            + l1 * inv_depth[fid, iv[1]]
            + l2 * inv_depth[fid, iv[2]]
        )
        with np.errstate(divide="ignore"):
            d = 1.0 / iz
        d = np.where(inside & (iz > 0), d, np.inf)

        sub_z = zbuf[y0 : y1 + 1, x0 : x1 + 1]
        win = d < sub_z
        if not win.any():
            continue
        sub_z[win] = d[win]
        depth[y0 : y1 + 1, x0 : x1 + 1][win] = d[win]
        face_id[y0 : y1 + 1, x0 : x1 + 1][win] = fid
        normal[y0 : y1 + 1, x0 : x1 + 1][win] = normals_cam[fid]

    return GBuffer(depth, normal, face_id)


def backproject(pixel, gbuffer: GBuffer, camera: Camera) -> np.ndarray:
    """Lift a foreground pixel to its world-space surface point."""
    x, y = int(pixel[0]), int(pixel[1])
    H, W = gbuffer.shape
    if not (0 <= x < W and 0 <= y < H):
        raise NoSurfaceError(f"pixel ({x}, {y}) outside the image")
    d = gbuffer.depth[y, x]
    if gbuffer.face_id[y, x] == BACKGROUND_FACE or d <= 0:
        raise NoSurfaceError(f"pixel ({x}, {y}) is background")
    ray = camera.pixel_ray_cam(np.array([[x, y]], dtype=np.float64))[0]
    cam_pt = ray * d  # ray z is -1, so z = -d exactly
    return camera.to_world(cam_pt)[0]


def nearest_foreground(gbuffer: GBuffer, pixel, max_dist: float) -> tuple[int, int] | None:
    """Closest foreground pixel within max_dist (Euclidean), or None."""
    fg = np.argwhere(gbuffer.foreground())
    if len(fg) == 0:
        return None
    p = np.array([pixel[1], pixel[0]], dtype=np.float64)  # row, col
    d2 = ((fg - p) ** 2).sum(axis=1)
    i = int(np.argmin(d2))
    if d2[i] > max_dist * max_dist:
        return None
    return int(fg[i, 1]), int(fg[i, 0])


def focal_crop(camera: Camera, rect: tuple[float, float, float, float]) -> Camera:
    """Narrow the frustum to a pixel rectangle (x, y, w, h).

    The rect is expanded to the image aspect about its center; the returned
    camera keeps the parent resolution and its pixel-center rays coincide
    with the parent's rays through the rect.
    """
    x, y, w, h = (float(v) for v in rect)
    if w <= 0 or h <= 0:
        raise InvalidInputError("empty crop rectangle")
    aspect = camera.width / camera.height
    if w / h < aspect:
        new_w = h * aspect
        x -= (new_w - w) / 2.0
        w = new_w
    elif w / h > aspect:
        new_h = w / aspect
        y -= (new_h - h) / 2.0
        h = new_h
    s = w / camera.width  # == h / camera.height after aspect expansion
    f2 = camera.focal_px / s
    cx, cy = camera.principal
    cx2 = (cx - x) / s
    cy2 = (cy - y) / s
    vfov2 = 2.0 * np.arctan((camera.height / 2.0) / f2)
    return replace(camera, vfov=float(vfov2), principal=(cx2, cy2))


# ---------------------------------------------------------------------------
# Tensor block format
#
# magic "S2ATNSR1" | u32 LE header length | JSON header | payload
# header: {"dtype": "f32", "shape": [...], "meta": {...}}
# payload: little-endian float32, C-order over the declared shape.


def write_tensor_block(channels: np.ndarray, meta: dict | None = None) -> bytes:
    arr = np.ascontiguousarray(np.asarray(channels, dtype=np.float32))
    header = {
        "dtype": "f32",
        "shape": list(arr.shape),
        "meta": meta or {},
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = arr.astype("<f4").tobytes(order="C")
    return TENSOR_MAGIC + struct.pack("<I", len(hbytes)) + hbytes + payload


def read_tensor_block(data: bytes) -> tuple[np.ndarray, dict]:
    if len(data) < 12 or data[:8] != TENSOR_MAGIC:
        raise TensorFormatError("bad magic: not a tensor block")
    (hlen,) = struct.unpack("<I", data[8:12])
    if len(data) < 12 + hlen:
        raise TensorFormatError("truncated header")
    try:
        header = json.loads(data[12 : 12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise TensorFormatError(f"bad header JSON: {e}")
    if header.get("dtype") != "f32":
        raise TensorFormatError(f"unsupported dtype {header.get('dtype')!r}")
    shape = tuple(int(s) for s in header["shape"])
    count = int(np.prod(shape)) if shape else 1
    payload = data[12 + hlen :]
    if len(payload) != count * 4:
        raise TensorFormatError(
            f"payload size {len(payload)} != declared {count * 4}"
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(shape)
    return arr.copy(), header.get("meta", {})


# ---------------------------------------------------------------------------
# PNG export (visualization only, never read back)


def depth_to_png(gbuffer: GBuffer) -> bytes:
    from PIL import Image

    d = gbuffer.depth
    fg = gbuffer.foreground()
    img = np.zeros(d.shape, dtype=np.uint8)
    if fg.any():
        lo, hi = d[fg].min(), d[fg].max()
        span = hi - lo if hi > lo else 1.0
        img[fg] = np.clip(255 * (1.0 - (d[fg] - lo) / span), 0, 255).astype(np.uint8)
    buf = _png_bytes(Image.fromarray(img, mode="L"))
    return buf


def shaded_png(gbuffer: GBuffer) -> bytes:
    """Simple normal-shaded render for the UI."""
    from PIL import Image

    n = gbuffer.normal
    fg = gbuffer.foreground()
    shade = np.zeros(gbuffer.shape, dtype=np.float64)
    light = unit(np.array([0.3, 0.5, 0.8]))
    shade[fg] = 0.2 + 0.8 * np.clip(n[fg] @ light, 0, 1)
    img = np.full((*gbuffer.shape, 3), 255, dtype=np.uint8)
    img[fg] = (np.clip(shade[fg], 0, 1)[:, None] * np.array([235, 235, 240])).astype(
        np.uint8
    )
    return _png_bytes(Image.fromarray(img, mode="RGB"))


def mask_png(mask: np.ndarray) -> bytes:
    from PIL import Image

    img = (np.asarray(mask, dtype=np.float64) > 0.5).astype(np.uint8) * 255
    return _png_bytes(Image.fromarray(img, mode="L"))


def _png_bytes(image) -> bytes:
    import io

    buf = io.BytesIO()
    image.save(buf, format="PNG")
    return buf.getvalue()
