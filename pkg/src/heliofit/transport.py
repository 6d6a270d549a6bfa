"""Precomputed light transport for the canonical sphere-on-plane scene.

The transport matrix maps environment-map radiance linearly onto a rendered
camera image of a Lambertian sphere resting on a Lambertian ground plane.
Surface rows integrate ``albedo/pi * cos * visibility * dOmega`` over the
sky hemisphere; primary rays that miss the geometry look the sky up directly
(nearest env pixel, weight one) so the whole operator stays linear.

Construction is deterministic: fixed pixel order, no RNG, analytic
ray-sphere / ray-plane intersections only.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .envmap import (
    SKYANGULAR,
    HdrImage,
    bilinear_sample,
    nearest_pixel,
    pixel_directions,
    solid_angles,
)
from .geometry import direction_to_skyangular

_EPS = 1e-9


@dataclass(frozen=True)
class SceneSpec:
    """Sphere-on-plane scene with a pinhole camera.

    Defaults: unit sphere tangent to the plane at the origin, albedo 0.8,
    camera five units out at 30 degrees elevation looking at the sphere,
    45 degree vertical FOV, 64x64 render.
    """

    sphere_center: tuple = (0.0, 0.0, 1.0)
    sphere_radius: float = 1.0
    plane_height: float = 0.0
    albedo: float = 0.8
    camera_position: tuple = (-4.330127018922194, 0.0, 2.5)
    camera_lookat: tuple = (0.0, 0.0, 1.0)
    fov_deg: float = 45.0
    render_width: int = 64
    render_height: int = 64

    def __post_init__(self):
        if not (0.0 < self.albedo <= 1.0):
            raise ValueError("albedo must be in (0, 1]")
        if self.sphere_radius <= 0.0:
            raise ValueError("sphere radius must be positive")
        c = np.asarray(self.sphere_center, dtype=float)
        if c[2] - self.sphere_radius < self.plane_height - 1e-9:
            raise ValueError("sphere must rest on or above the plane")
        cam = np.asarray(self.camera_position, dtype=float)
        if np.linalg.norm(cam - c) <= self.sphere_radius:
            raise ValueError("camera is inside the sphere")
        if cam[2] <= self.plane_height:
            raise ValueError("camera must be above the plane")

    def scene_hash(self) -> bytes:
        parts = (
            tuple(self.sphere_center),
            self.sphere_radius,
            self.plane_height,
            self.albedo,
            tuple(self.camera_position),
            tuple(self.camera_lookat),
            self.fov_deg,
            self.render_width,
            self.render_height,
        )
        return hashlib.sha256(repr(parts).encode("ascii")).digest()


@dataclass(frozen=True)
class TransportMatrix:
    """Sparse (render pixels) x (env pixels) non-negative weights."""

    weights: sp.csr_matrix = field(repr=False)
    render_shape: tuple
    env_size: int
    env_projection: str
    scene_hash: bytes

    @property
    def render_pixels(self) -> int:
        return self.weights.shape[0]

    @property
    def env_pixels(self) -> int:
        return self.weights.shape[1]


def _camera_rays(scene: SceneSpec):
    """Primary ray directions, one per render pixel, row-major."""
    w, h = scene.render_width, scene.render_height
    pos = np.asarray(scene.camera_position, dtype=float)
    look = np.asarray(scene.camera_lookat, dtype=float)
    fwd = look - pos
    fwd = fwd / np.linalg.norm(fwd)
    world_up = np.array([0.0, 0.0, 1.0])
    right = np.cross(fwd, world_up)
    nr = np.linalg.norm(right)
    if nr < 1e-12:  # looking straight up/down
        right = np.array([1.0, 0.0, 0.0])
    else:
        right = right / nr
    up = np.cross(right, fwd)
    half = np.tan(np.radians(scene.fov_deg) / 2.0)
    xs = (np.arange(w) + 0.5) / w * 2.0 - 1.0
    ys = 1.0 - (np.arange(h) + 0.5) / h * 2.0
    xx, yy = np.meshgrid(xs * half * (w / h), ys * half)
    d = xx[..., None] * right + yy[..., None] * up + fwd
    d = d / np.linalg.norm(d, axis=-1, keepdims=True)
    return pos, d.reshape(-1, 3)


def _ray_sphere_t(origins, dirs, center, radius):
    """Smallest positive hit parameter per ray, inf on miss."""
    oc = origins - center
    b = 2.0 * np.einsum("ij,ij->i", dirs, oc)
    c = np.einsum("ij,ij->i", oc, oc) - radius * radius
    disc = b * b - 4.0 * c
    hit = disc > 0.0
    sq = np.sqrt(np.maximum(disc, 0.0))
    t1 = (-b - sq) / 2.0
    t2 = (-b + sq) / 2.0
    t = np.where(t1 > _EPS, t1, np.where(t2 > _EPS, t2, np.inf))
    return np.where(hit, t, np.inf)


def _occluded(points, dirs, center, radius):
    """True where a ray from each point along each dir hits the sphere.

    points: (n, 3); dirs: (m, 3) -> (n, m) boolean.
    """
    oc = points[:, None, :] - center  # (n, 1, 3)
    b = 2.0 * np.einsum("nmj,mj->nm", np.broadcast_to(oc, (len(points), len(dirs), 3)), dirs)
    c = np.einsum("nj,nj->n", oc[:, 0, :], oc[:, 0, :]) - radius * radius
    disc = b * b - 4.0 * c[:, None]
    sq = np.sqrt(np.maximum(disc, 0.0))
    t2 = (-b + sq) / 2.0
    t1 = (-b - sq) / 2.0
    thit = np.where(t1 > _EPS, t1, t2)
    return (disc > 0.0) & (thit > _EPS)


def build_transport(scene: SceneSpec, env_size: int) -> TransportMatrix:
    """Cast one primary ray per render pixel and integrate the sky hemisphere
    at each surface hit; misses map straight to the nearest env pixel."""
    center = np.asarray(scene.sphere_center, dtype=float)
    radius = scene.sphere_radius
    pos, rays = _camera_rays(scene)
    n_rays = rays.shape[0]

    # environment geometry (skyangular)
    env_proto = HdrImage(np.zeros((env_size, env_size, 3)), projection=SKYANGULAR)
    zen, az = pixel_directions(env_size, env_size, SKYANGULAR)
    emask = env_proto.mask
    dom = solid_angles(env_proto).weights
    valid_idx = np.flatnonzero(emask.ravel())
    zv = zen.ravel()[valid_idx]
    av = az.ravel()[valid_idx]
    env_dirs = np.stack(
        [np.sin(zv) * np.cos(av), np.sin(zv) * np.sin(av), np.cos(zv)], axis=1
    )
    env_dom = dom.ravel()[valid_idx]

    t_sph = _ray_sphere_t(np.broadcast_to(pos, rays.shape), rays, center, radius)
    dz = rays[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_pln = np.where(dz < -_EPS, (scene.plane_height - pos[2]) / dz, np.inf)
    t_hit = np.minimum(t_sph, t_pln)
    is_sphere = t_sph <= t_pln
    hit = np.isfinite(t_hit)

    if not np.any(hit & is_sphere):
        raise ValueError("camera does not see the sphere")
    if not np.any(hit & ~is_sphere):
        raise ValueError("camera does not see the plane")

    indptr = np.zeros(n_rays + 1, dtype=np.int64)
    indices_parts = []
    data_parts = []
    counts = np.zeros(n_rays, dtype=np.int64)

    miss = ~hit
    if np.any(miss):
        # sky background: nearest env pixel, weight 1
        mdirs = rays[miss]
        mz = np.arccos(np.clip(mdirs[:, 2], -1.0, 1.0))
        ma = np.mod(np.arctan2(mdirs[:, 1], mdirs[:, 0]), 2.0 * np.pi)
        mz = np.minimum(mz, np.pi / 2.0)  # grazing rays land on the rim
        uu, vv = direction_to_skyangular(mz, ma)
        rr, cc = nearest_pixel(uu, vv, env_size)
        miss_cols = rr * env_size + cc

    hit_points = pos + rays * t_hit[:, None]
    normals = np.zeros_like(rays)
    normals[is_sphere] = (hit_points[is_sphere] - center) / radius
    normals[~is_sphere] = np.array([0.0, 0.0, 1.0])

    chunk = 256
    hit_idx = np.flatnonzero(hit)
    chunk_rows: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for start in range(0, len(hit_idx), chunk):
        rows = hit_idx[start : start + chunk]
        pts = hit_points[rows]
        nrm = normals[rows]
        cosw = nrm @ env_dirs.T  # (n, Qv)
        w = (scene.albedo / np.pi) * np.maximum(cosw, 0.0) * env_dom[None, :]
        plane_rows = ~is_sphere[rows]
        if np.any(plane_rows):
            # only plane points can be shadowed by the sphere (convexity)
            occ = _occluded(pts[plane_rows] + nrm[plane_rows] * 1e-7, env_dirs, center, radius)
            wsub = w[plane_rows]
            wsub[occ] = 0.0
            w[plane_rows] = wsub
        for k, row in enumerate(rows):
            nz = np.flatnonzero(w[k] > 0.0)
            chunk_rows[int(row)] = (valid_idx[nz].astype(np.int32), w[k][nz])

    miss_iter = iter(miss_cols) if np.any(miss) else iter(())
    for p in range(n_rays):
        if hit[p]:
            cols, vals = chunk_rows[p]
        else:
            cols = np.array([next(miss_iter)], dtype=np.int32)
            vals = np.array([1.0])
        counts[p] = len(cols)
        indices_parts.append(cols)
        data_parts.append(vals)
    indptr[1:] = np.cumsum(counts)
    indices = np.concatenate(indices_parts)
    data = np.concatenate(data_parts)
    mat = sp.csr_matrix(
        (data, indices, indptr), shape=(n_rays, env_size * env_size)
    )
    return TransportMatrix(
        weights=mat,
        render_shape=(scene.render_height, scene.render_width),
        env_size=env_size,
        env_projection=SKYANGULAR,
        scene_hash=scene.scene_hash(),
    )


def surface_row_info(scene: SceneSpec):
    """Per-render-pixel hit classification: 0 miss, 1 sphere, 2 plane, plus
    hit points.  Handy for tests probing specific rows."""
    center = np.asarray(scene.sphere_center, dtype=float)
    pos, rays = _camera_rays(scene)
    t_sph = _ray_sphere_t(np.broadcast_to(pos, rays.shape), rays, center, scene.sphere_radius)
    dz = rays[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_pln = np.where(dz < -_EPS, (scene.plane_height - pos[2]) / dz, np.inf)
    t_hit = np.minimum(t_sph, t_pln)
    kind = np.zeros(len(rays), dtype=int)
    kind[np.isfinite(t_hit) & (t_sph <= t_pln)] = 1
    kind[np.isfinite(t_hit) & (t_sph > t_pln)] = 2
    pts = pos + rays * np.where(np.isfinite(t_hit), t_hit, 0.0)[:, None]
    return kind, pts


def apply_transport(T: TransportMatrix, env: HdrImage) -> HdrImage:
    """render[p] = sum_q w[p][q] * env[q], per channel."""
    if env.projection != T.env_projection or env.width != T.env_size or env.height != T.env_size:
        raise ValueError(
            f"environment {env.width}x{env.height}/{env.projection} does not match "
            f"transport {T.env_size}/{T.env_projection}"
        )
    flat = env.data.reshape(-1, 3)
    out = T.weights @ flat
    return HdrImage(
        out.reshape(T.render_shape + (3,)),
        projection="raster",
        exposure_scale=env.exposure_scale,
    )


def render_loss_l1(env_a: HdrImage, env_b: HdrImage, T: TransportMatrix) -> float:
    """Mean absolute difference between the two transported renders."""
    ra = apply_transport(T, env_a)
    rb = apply_transport(T, env_b)
    return float(np.mean(np.abs(ra.data - rb.data)))


def render_mirror_sphere(env: HdrImage, size: int) -> HdrImage:
    """Orthographic mirror-ball preview seen from straight above.

    Reflections that point below the horizon come back black, as do pixels
    outside the ball.
    """
    if env.projection != SKYANGULAR:
        raise ValueError("mirror preview expects a skyangular environment")
    xs = (np.arange(size) + 0.5) / size * 2.0 - 1.0
    xx, yy = np.meshgrid(xs, xs)
    r2 = xx * xx + yy * yy
    on_ball = r2 <= 1.0
    zz = np.sqrt(np.maximum(1.0 - r2, 0.0))
    # view ray (0,0,-1); reflection = (2 z x, 2 z y, 2 z^2 - 1)
    rx = 2.0 * zz * xx
    ry = 2.0 * zz * yy
    rz = 2.0 * zz * zz - 1.0
    upward = rz >= 0.0
    zen = np.arccos(np.clip(rz, -1.0, 1.0))
    az = np.mod(np.arctan2(ry, rx), 2.0 * np.pi)
    ok = on_ball & upward
    uu = 0.5 + (zen / np.pi) * np.cos(az)
    vv = 0.5 + (zen / np.pi) * np.sin(az)
    x = uu * env.width - 0.5
    y = vv * env.height - 0.5
    vals, sup = bilinear_sample(env.data, env.mask, x, y)
    vals[~(ok & sup)] = 0.0
    return HdrImage(vals, projection="raster")


# ---------------------------------------------------------------------------
# HFTM container: binary transport serialization
# ---------------------------------------------------------------------------
#
#   offset  size  field
#   0       4     magic "HFTM"
#   4       4     version (u32 le) = 1
#   8       4     render height (u32)
#   12      4     render width (u32)
#   16      4     env size (u32)
#   20      4     env projection code (u32; 0 = skyangular)
#   24      32    scene hash (sha256)
#   56      8     nnz (u64)
#   64      ...   indptr   (i64  x (P+1))
#   ...     ...   indices  (i32  x nnz)
#   ...     ...   weights  (f32  x nnz)
#
# All integers and floats little-endian.

_HFTM_MAGIC = b"HFTM"
_HFTM_VERSION = 1
_PROJ_CODES = {SKYANGULAR: 0}
_PROJ_NAMES = {0: SKYANGULAR}


def save_transport(path, T: TransportMatrix) -> None:
    m = T.weights
    with open(path, "wb") as f:
        f.write(_HFTM_MAGIC)
        f.write(
            struct.pack(
                "<IIIII",
                _HFTM_VERSION,
                T.render_shape[0],
                T.render_shape[1],
                T.env_size,
                _PROJ_CODES[T.env_projection],
            )
        )
        f.write(T.scene_hash)
        f.write(struct.pack("<Q", m.nnz))
        f.write(m.indptr.astype("<i8").tobytes())
        f.write(m.indices.astype("<i4").tobytes())
        f.write(m.data.astype("<f4").tobytes())


def load_transport(path) -> TransportMatrix:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != _HFTM_MAGIC:
        raise ValueError("not an HFTM transport file")
    version, rh, rw, env_size, proj = struct.unpack_from("<IIIII", blob, 4)
    if version != _HFTM_VERSION:
        raise ValueError(f"unsupported HFTM version {version}")
    scene_hash = blob[24:56]
    (nnz,) = struct.unpack_from("<Q", blob, 56)
    p = rh * rw
    off = 64
    indptr = np.frombuffer(blob, dtype="<i8", count=p + 1, offset=off)
    off += (p + 1) * 8
    indices = np.frombuffer(blob, dtype="<i4", count=nnz, offset=off)
    off += nnz * 4
    data = np.frombuffer(blob, dtype="<f4", count=nnz, offset=off).astype(np.float64)
    mat = sp.csr_matrix((data, indices.astype(np.int32), indptr.astype(np.int64)),
                        shape=(p, env_size * env_size))
    return TransportMatrix(
        weights=mat,
        render_shape=(rh, rw),
        env_size=env_size,
        env_projection=_PROJ_NAMES[proj],
        scene_hash=scene_hash,
    )
