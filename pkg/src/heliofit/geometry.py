"""Sky-dome directions and the skyangular (square fisheye) projection.

Conventions used project-wide:

* A direction is (zenith, azimuth) in radians, zenith in [0, pi]
  (upper hemisphere is [0, pi/2]), azimuth normalized to [0, 2*pi).
* World unit vectors are (sin z cos a, sin z sin a, cos z), +z up.
* Skyangular image coordinates: u right, v down, both in [0, 1].
  Image center (0.5, 0.5) is the zenith, the inscribed circle rim is the
  horizon, and the azimuth of a pixel is atan2(v - 0.5, u - 0.5).  Every
  module must use this mapping or sun localization breaks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def normalize_azimuth(azimuth: float) -> float:
    """Wrap an azimuth into [0, 2*pi)."""
    a = math.fmod(azimuth, TWO_PI)
    if a < 0.0:
        a += TWO_PI
    # fmod can return exactly TWO_PI after the correction for tiny negatives
    if a >= TWO_PI:
        a = 0.0
    return a


@dataclass(frozen=True)
class Direction:
    """A direction on the sphere: zenith angle and azimuth, radians."""

    zenith: float
    azimuth: float

    def __post_init__(self):
        if not (0.0 <= self.zenith <= math.pi):
            raise ValueError(f"zenith must be in [0, pi], got {self.zenith}")
        if not math.isfinite(self.azimuth):
            raise ValueError("azimuth must be finite")
        object.__setattr__(self, "azimuth", normalize_azimuth(self.azimuth))

    def to_vector(self) -> np.ndarray:
        sz = math.sin(self.zenith)
        return np.array(
            [sz * math.cos(self.azimuth), sz * math.sin(self.azimuth), math.cos(self.zenith)]
        )

    @staticmethod
    def from_vector(v: np.ndarray) -> "Direction":
        v = np.asarray(v, dtype=float)
        n = float(np.linalg.norm(v))
        if n == 0.0:
            raise ValueError("zero vector has no direction")
        z = float(np.clip(v[2] / n, -1.0, 1.0))
        return Direction(math.acos(z), math.atan2(v[1], v[0]))

    @property
    def zenith_deg(self) -> float:
        return math.degrees(self.zenith)


def angle_between(u: Direction, v: Direction) -> float:
    """Angle in [0, pi] between two directions (arccos of the unit-vector dot)."""
    d = float(np.dot(u.to_vector(), v.to_vector()))
    return math.acos(min(1.0, max(-1.0, d)))


def skyangular_to_direction(u, v):
    """Map normalized image coords to (zenith, azimuth); NaN outside the disk.

    With rho = 2*sqrt((u-1/2)^2 + (v-1/2)^2): zenith = rho*pi/2 and
    azimuth = atan2(v-1/2, u-1/2).  Accepts scalars or arrays; points with
    rho > 1 come back as NaN in both channels.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    du = u - 0.5
    dv = v - 0.5
    rho = 2.0 * np.hypot(du, dv)
    zenith = rho * (math.pi / 2.0)
    azimuth = np.mod(np.arctan2(dv, du), TWO_PI)
    invalid = rho > 1.0
    zenith = np.where(invalid, np.nan, zenith)
    azimuth = np.where(invalid, np.nan, azimuth)
    if zenith.ndim == 0:
        return float(zenith), float(azimuth)
    return zenith, azimuth


def direction_to_skyangular(zenith, azimuth):
    """Inverse of skyangular_to_direction on the valid disk.

    Rejects lower-hemisphere input (zenith > pi/2).
    """
    zenith = np.asarray(zenith, dtype=float)
    azimuth = np.asarray(azimuth, dtype=float)
    if np.any(zenith > math.pi / 2.0 + 1e-12):
        raise ValueError("direction below the horizon has no skyangular image")
    r = zenith / math.pi  # rho/2, in [0, 1/2]
    u = 0.5 + r * np.cos(azimuth)
    v = 0.5 + r * np.sin(azimuth)
    if u.ndim == 0:
        return float(u), float(v)
    return u, v
