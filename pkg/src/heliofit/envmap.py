"""HDR environment-map container, hemispherical projections and image ops.

An HdrImage always holds linear radiance.  Tonemapped data lives in plain
arrays (the tonemap functions return ndarrays) because the log-shifted range
[-1, 1] breaks the non-negativity invariant of linear images.

Pixels of a skyangular image outside the inscribed circle are invalid: they
are excluded from every statistic, every loss, and every resampling support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import skyangular_to_direction
from .sky import LMParams, eval_lm_field

SKYANGULAR = "skyangular"
EQUIRECT_HEMISPHERE = "equirect_hemisphere"
RASTER = "raster"  # plain camera image, no dome semantics
PROJECTIONS = (SKYANGULAR, EQUIRECT_HEMISPHERE, RASTER)


@dataclass(frozen=True)
class HdrImage:
    """Immutable linear-radiance raster with projection metadata.

    ``exposure_scale`` is the multiplier relating stored values back to the
    original radiance: original = stored * exposure_scale.
    """

    data: np.ndarray
    projection: str = SKYANGULAR
    exposure_scale: float = 1.0
    mask: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        data = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if data.ndim != 3 or data.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) pixel grid, got {data.shape}")
        if self.projection not in PROJECTIONS:
            raise ValueError(f"unknown projection {self.projection!r}")
        if self.projection == SKYANGULAR and data.shape[0] != data.shape[1]:
            raise ValueError("skyangular images must be square")
        if not np.all(np.isfinite(data)):
            raise ValueError("non-finite pixel values")
        if self.mask is None:
            mask = _valid_mask(data.shape[0], data.shape[1], self.projection)
        else:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != data.shape[:2]:
                raise ValueError("mask shape mismatch")
        if np.any(data[mask] < 0.0):
            raise ValueError("negative radiance in valid pixels")
        data.setflags(write=False)
        mask = np.ascontiguousarray(mask)
        mask.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "mask", mask)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def with_data(self, data: np.ndarray, exposure_scale: float | None = None) -> "HdrImage":
        return HdrImage(
            data,
            projection=self.projection,
            exposure_scale=self.exposure_scale if exposure_scale is None else exposure_scale,
        )

    def pixel_directions(self):
        """Per-pixel (zenith, azimuth) arrays at pixel centers; NaN where invalid."""
        return pixel_directions(self.height, self.width, self.projection)


def _pixel_centers(h: int, w: int):
    u = (np.arange(w) + 0.5) / w
    v = (np.arange(h) + 0.5) / h
    return np.meshgrid(u, v)


def _valid_mask(h: int, w: int, projection: str) -> np.ndarray:
    if projection == SKYANGULAR:
        uu, vv = _pixel_centers(h, w)
        return np.hypot(uu - 0.5, vv - 0.5) <= 0.5
    return np.ones((h, w), dtype=bool)


def _equirect_directions(h: int, w: int):
    az = (np.arange(w) + 0.5) / w * 2.0 * math.pi
    zen = (np.arange(h) + 0.5) / h * (math.pi / 2.0)
    aa, zz = np.meshgrid(az, zen)
    return zz, aa


def pixel_directions(h: int, w: int, projection: str):
    if projection == SKYANGULAR:
        uu, vv = _pixel_centers(h, w)
        return skyangular_to_direction(uu, vv)
    if projection == EQUIRECT_HEMISPHERE:
        return _equirect_directions(h, w)
    raise ValueError(f"projection {projection!r} has no dome directions")


@dataclass(frozen=True)
class SolidAngleMap:
    """Per-pixel steradian weights aligned with an HdrImage geometry."""

    weights: np.ndarray

    @property
    def total(self) -> float:
        return float(self.weights.sum())


def solid_angles(img: HdrImage) -> SolidAngleMap:
    """Steradian weight of each pixel; invalid pixels get zero.

    Skyangular: dOmega/(du dv) = pi * sin(pi r) / r at radius r from
    the center, integrating to 2*pi over the disk.
    """
    h, w = img.height, img.width
    if img.projection == SKYANGULAR:
        uu, vv = _pixel_centers(h, w)
        r = np.hypot(uu - 0.5, vv - 0.5)
        r = np.maximum(r, 1e-12)
        wts = np.where(img.mask, math.pi * np.sin(math.pi * r) / r / (h * w), 0.0)
        # r -> 0 limit of the density is pi^2
        center = r <= 1e-12
        wts = np.where(center & img.mask, math.pi**2 / (h * w), wts)
    elif img.projection == EQUIRECT_HEMISPHERE:
        zen, _ = _equirect_directions(h, w)
        wts = np.sin(zen) * (math.pi / 2.0 / h) * (2.0 * math.pi / w)
        wts = np.where(img.mask, wts, 0.0)
    else:
        raise ValueError(img.projection)
    wts.setflags(write=False)
    return SolidAngleMap(weights=wts)


def render_lm_dome(p: LMParams, size: int, projection: str = SKYANGULAR) -> HdrImage:
    """Evaluate the sky model at every pixel-center direction; invalid zeroed."""
    if projection == SKYANGULAR:
        h = w = size
    elif projection == EQUIRECT_HEMISPHERE:
        h, w = size, 2 * size
    else:
        raise ValueError(f"unknown projection {projection!r}")
    zen, az = pixel_directions(h, w, projection)
    mask = _valid_mask(h, w, projection)
    zen_f = np.where(mask, zen, 0.0)
    az_f = np.where(mask, az, 0.0)
    gamma = gamma_to_sun(zen_f, az_f, p.sun.zenith, p.sun.azimuth)
    vals = eval_lm_field(zen_f, gamma, p)
    vals[~mask] = 0.0
    return HdrImage(vals, projection=projection)


def gamma_to_sun(zenith, azimuth, sun_zenith: float, sun_azimuth: float):
    """Angular distance to the sun for arrays of (zenith, azimuth)."""
    cosg = np.sin(zenith) * math.sin(sun_zenith) * np.cos(azimuth - sun_azimuth) + np.cos(
        zenith
    ) * math.cos(sun_zenith)
    return np.arccos(np.clip(cosg, -1.0, 1.0))


def percentile_expose(img: HdrImage, pct: float = 99.0):
    """Divide by the pct-th percentile of valid-pixel values, pooled across
    channels, and fold the divisor into exposure_scale.

    Returns (exposed image, divisor). Raises on an all-zero image.
    """
    vals = img.data[img.mask].ravel()
    if vals.size == 0:
        raise ValueError("no valid pixels")
    divisor = float(np.percentile(vals, pct))
    if divisor <= 0.0:
        raise ValueError("percentile divisor is zero; image has no positive signal")
    out = img.with_data(img.data / divisor, exposure_scale=img.exposure_scale * divisor)
    return out, divisor


def tonemap_forward(img):
    """2*log2(I + 1) - 1 on linear radiance; accepts HdrImage or array.

    Returns an ndarray (the result is not linear radiance).
    """
    vals = img.data if isinstance(img, HdrImage) else np.asarray(img, dtype=float)
    if np.any(vals < 0.0):
        raise ValueError("tonemap_forward requires non-negative linear input")
    return 2.0 * np.log2(vals + 1.0) - 1.0


def tonemap_inverse(vals):
    """Exact inverse: 2^((I' + 1)/2) - 1."""
    vals = np.asarray(vals, dtype=float)
    return np.exp2((vals + 1.0) / 2.0) - 1.0


def flip_x(img: HdrImage) -> HdrImage:
    """Mirror left-right (reverses the u axis)."""
    return img.with_data(img.data[:, ::-1, :])


def flip_y(img: HdrImage) -> HdrImage:
    """Mirror top-bottom (reverses the v axis)."""
    return img.with_data(img.data[::-1, :, :])


def bilinear_sample(data: np.ndarray, mask: np.ndarray, x, y):
    """Mask-aware bilinear lookup at fractional pixel coords (x=column, y=row).

    Invalid pixels are excluded from the interpolation support; a sample whose
    entire support is invalid comes back as (0, ..., valid=False).
    """
    h, w = mask.shape
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x0 = np.floor(x).astype(int)
    y0 = np.floor(y).astype(int)
    fx = x - x0
    fy = y - y0
    acc = np.zeros(x.shape + (data.shape[2],))
    wacc = np.zeros(x.shape)
    for dy in (0, 1):
        for dx in (0, 1):
            xi = np.clip(x0 + dx, 0, w - 1)
            yi = np.clip(y0 + dy, 0, h - 1)
            wgt = np.where(dx == 1, fx, 1.0 - fx) * np.where(dy == 1, fy, 1.0 - fy)
            wgt = wgt * mask[yi, xi]
            acc += wgt[..., None] * data[yi, xi]
            wacc += wgt
    ok = wacc > 1e-12
    out = np.where(ok[..., None], acc / np.where(ok, wacc, 1.0)[..., None], 0.0)
    return out, ok


def rotate_azimuth(img: HdrImage, dphi: float) -> HdrImage:
    """Rotate the sky about the zenith by dphi radians (counterclockwise in
    azimuth), resampling with mask-aware bilinear interpolation."""
    h, w = img.height, img.width
    if img.projection == SKYANGULAR:
        uu, vv = _pixel_centers(h, w)
        du, dv = uu - 0.5, vv - 0.5
        cosd, sind = math.cos(dphi), math.sin(dphi)
        # inverse mapping: source point at azimuth (phi_out - dphi), same radius
        su = 0.5 + (du * cosd + dv * sind)
        sv = 0.5 + (-du * sind + dv * cosd)
        x = su * w - 0.5
        y = sv * h - 0.5
        vals, ok = bilinear_sample(img.data, img.mask, x, y)
        vals[~(img.mask & ok)] = 0.0
        return img.with_data(vals)
    if img.projection == EQUIRECT_HEMISPHERE:
        shift = dphi / (2.0 * math.pi) * w
        cols = np.arange(w) - shift
        c0 = np.floor(cols).astype(int)
        f = cols - c0
        a = img.data[:, np.mod(c0, w), :]
        b = img.data[:, np.mod(c0 + 1, w), :]
        return img.with_data(a * (1 - f)[None, :, None] + b * f[None, :, None])
    raise ValueError(img.projection)


def nearest_pixel(u, v, size: int):
    """Nearest pixel (row, col) for normalized coords in a size x size image."""
    col = np.clip(np.round(np.asarray(u) * size - 0.5).astype(int), 0, size - 1)
    row = np.clip(np.round(np.asarray(v) * size - 0.5).astype(int), 0, size - 1)
    return row, col
