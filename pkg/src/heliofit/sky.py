"""Analytic two-term parametric sky model.

The radiance of a sky direction is the sum of a sun term and a sky term:

* sun term: ``c_sun * exp(-beta * exp(-kappa / gamma))`` where gamma is the
  angle to the sun and (beta, kappa) shape the angular falloff;
* sky term: ``c_sky * perez_ratio(...)``, a turbidity-parameterized Perez
  luminance distribution normalized so the zenith value is exactly 1.

Normalizing at the zenith makes ``c_sky`` the zenith radiance, which gives
tests a hard anchor.  Only the Perez luminance channel is used; chromaticity
is carried entirely by the two RGB colors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Direction, angle_between

# Fitting boxes for the scattering parameters: kappa, beta, turbidity.
KAPPA_RANGE = (0.0, 1.0)
BETA_RANGE = (0.0, 50.0)
TURBIDITY_RANGE = (2.0, 20.0)

# Fit outputs reject suns lower than this zenith angle.
SUN_ZENITH_CUTOFF_DEG = 80.0

# cos(view zenith) is clamped here: the horizon blows up exp(b / cos) and
# captured domes carry no valid data exactly at the rim anyway.
COS_VIEW_FLOOR = 0.01

# gamma floor for the sun term so the gamma -> 0 limit (= c_sun) is taken.
_GAMMA_FLOOR = 1e-12

_SERIAL_FIELDS = (
    "sky_color_r",
    "sky_color_g",
    "sky_color_b",
    "turbidity",
    "sun_color_r",
    "sun_color_g",
    "sun_color_b",
    "beta",
    "kappa",
    "sun_zenith_rad",
    "sun_azimuth_rad",
)


@dataclass(frozen=True)
class ColorRGB:
    """Linear radiance triple, arbitrary absolute scale."""

    r: float
    g: float
    b: float

    def __post_init__(self):
        for ch in (self.r, self.g, self.b):
            if not math.isfinite(ch):
                raise ValueError("color channels must be finite")
            if ch < 0.0:
                raise ValueError("negative radiance is not physical")

    def as_array(self) -> np.ndarray:
        return np.array([self.r, self.g, self.b], dtype=float)

    @staticmethod
    def from_array(a) -> "ColorRGB":
        a = np.asarray(a, dtype=float)
        return ColorRGB(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class PerezCoefficients:
    """Perez luminance-distribution coefficients for one turbidity."""

    a: float
    b: float
    c: float
    d: float
    e: float


@dataclass(frozen=True)
class LMParams:
    """The 11-parameter sky description: two colors, three scattering scalars,
    and the sun direction."""

    sky_color: ColorRGB
    turbidity: float
    sun_color: ColorRGB
    beta: float
    kappa: float
    sun: Direction

    def __post_init__(self):
        _check_range("turbidity", self.turbidity, TURBIDITY_RANGE)
        _check_range("beta", self.beta, BETA_RANGE)
        _check_range("kappa", self.kappa, KAPPA_RANGE)

    def to_dict(self) -> dict:
        """Flat 11-field record (the project-wide serialization layout)."""
        return {
            "sky_color_r": self.sky_color.r,
            "sky_color_g": self.sky_color.g,
            "sky_color_b": self.sky_color.b,
            "turbidity": self.turbidity,
            "sun_color_r": self.sun_color.r,
            "sun_color_g": self.sun_color.g,
            "sun_color_b": self.sun_color.b,
            "beta": self.beta,
            "kappa": self.kappa,
            "sun_zenith_rad": self.sun.zenith,
            "sun_azimuth_rad": self.sun.azimuth,
        }

    @staticmethod
    def from_dict(d: dict) -> "LMParams":
        missing = [k for k in _SERIAL_FIELDS if k not in d]
        if missing:
            raise ValueError(f"missing parameter fields: {missing}")
        return LMParams(
            sky_color=ColorRGB(d["sky_color_r"], d["sky_color_g"], d["sky_color_b"]),
            turbidity=float(d["turbidity"]),
            sun_color=ColorRGB(d["sun_color_r"], d["sun_color_g"], d["sun_color_b"]),
            beta=float(d["beta"]),
            kappa=float(d["kappa"]),
            sun=Direction(float(d["sun_zenith_rad"]), float(d["sun_azimuth_rad"])),
        )


def _check_range(name: str, value: float, lo_hi) -> None:
    lo, hi = lo_hi
    if not (lo <= value <= hi):
        raise ValueError(f"{name}={value} outside [{lo}, {hi}]")


def preetham_coefficients(t: float) -> PerezCoefficients:
    """Luminance-channel distribution coefficients, linear in turbidity."""
    _check_range("turbidity", t, TURBIDITY_RANGE)
    return PerezCoefficients(
        a=0.1787 * t - 1.4630,
        b=-0.3554 * t + 0.4275,
        c=-0.0227 * t + 5.3251,
        d=0.1206 * t - 2.5771,
        e=-0.0670 * t + 0.3703,
    )


def _perez_factors(cos_theta, gamma, k: PerezCoefficients):
    """The two factors of F = (1 + a e^{b/cos}) (1 + c e^{d g} + e cos^2 g),
    plus the sub-expressions needed for the turbidity derivative."""
    gamma = np.asarray(gamma, dtype=float)
    cg2 = np.cos(gamma) ** 2
    edg = np.exp(k.d * gamma)
    ebc = np.exp(k.b / cos_theta)
    g1 = 1.0 + k.a * ebc
    g2 = 1.0 + k.c * edg + k.e * cg2
    return g1, g2, ebc, edg, cg2


def perez_ratio(view_zenith, gamma, sun_zenith: float, k: PerezCoefficients):
    """F(view_zenith, gamma) / F(0, sun_zenith); equals 1 at the zenith.

    Vectorized over view_zenith/gamma.  cos(view_zenith) is clamped to
    COS_VIEW_FLOOR so horizon pixels stay finite.
    """
    ct = np.maximum(np.cos(np.asarray(view_zenith, dtype=float)), COS_VIEW_FLOOR)
    n1, n2, _, _, _ = _perez_factors(ct, gamma, k)
    d1, d2, _, _, _ = _perez_factors(1.0, float(sun_zenith), k)
    out = (n1 * n2) / (d1 * d2)
    if np.ndim(out) == 0:
        return float(out)
    return out


def sun_scatter_factor(gamma, beta: float, kappa: float):
    """exp(-beta * exp(-kappa / gamma)); the gamma -> 0 limit is 1 for kappa > 0."""
    s, _, _ = sun_scatter_partials(gamma, beta, kappa)
    if np.ndim(gamma) == 0:
        return float(s)
    return s


def eval_sky(l: Direction, p: LMParams) -> ColorRGB:
    """Sky term only: c_sky scaled by the normalized Perez ratio."""
    k = preetham_coefficients(p.turbidity)
    gamma = angle_between(l, p.sun)
    ratio = perez_ratio(l.zenith, gamma, p.sun.zenith, k)
    return ColorRGB.from_array(p.sky_color.as_array() * ratio)


def eval_sun(l: Direction, p: LMParams) -> ColorRGB:
    """Sun term only: c_sun damped by the double-exponential falloff."""
    gamma = angle_between(l, p.sun)
    s = sun_scatter_factor(gamma, p.beta, p.kappa)
    return ColorRGB.from_array(p.sun_color.as_array() * s)


def eval_lm(l: Direction, p: LMParams) -> ColorRGB:
    """Full model: sun term + sky term, channel-wise."""
    return ColorRGB.from_array(eval_sun(l, p).as_array() + eval_sky(l, p).as_array())


# ---------------------------------------------------------------------------
# Vectorized field evaluation + parameter partials (used by rendering/fitting)
# ---------------------------------------------------------------------------

def eval_lm_field(view_zenith, gamma, p: LMParams):
    """Evaluate the model over arrays of (view zenith, sun angle).

    Returns an array of shape gamma.shape + (3,).
    """
    k = preetham_coefficients(p.turbidity)
    ratio = perez_ratio(view_zenith, gamma, p.sun.zenith, k)
    s = sun_scatter_factor(gamma, p.beta, p.kappa)
    ratio = np.asarray(ratio)
    s = np.asarray(s)
    return (
        s[..., None] * p.sun_color.as_array()
        + ratio[..., None] * p.sky_color.as_array()
    )


def sun_scatter_partials(gamma, beta: float, kappa: float):
    """(s, ds/dbeta, ds/dkappa) for the sun falloff factor, vectorized."""
    g = np.maximum(np.asarray(gamma, dtype=float), _GAMMA_FLOOR)
    inner = np.exp(-kappa / g)
    s = np.exp(-beta * inner)
    ds_dbeta = -inner * s
    ds_dkappa = s * beta * inner / g
    return s, ds_dbeta, ds_dkappa


# slopes of the five coefficients w.r.t. turbidity
_COEFF_SLOPES = (0.1787, -0.3554, -0.0227, 0.1206, -0.0670)


def perez_ratio_partial_t(view_zenith, gamma, sun_zenith: float, t: float):
    """(ratio, dratio/dt), vectorized over view_zenith/gamma.

    The ratio value is bit-identical to perez_ratio at the same inputs.
    """
    k = preetham_coefficients(t)
    da, db, dc, dd, de = _COEFF_SLOPES

    def f_and_dt(cos_theta, g):
        g = np.asarray(g, dtype=float)
        g1, g2, ebc, edg, cg2 = _perez_factors(cos_theta, g, k)
        dg1 = ebc * (da + k.a * db / cos_theta)
        dg2 = dc * edg + k.c * g * edg * dd + de * cg2
        return g1 * g2, dg1 * g2 + g1 * dg2

    ct = np.maximum(np.cos(np.asarray(view_zenith, dtype=float)), COS_VIEW_FLOOR)
    num, dnum = f_and_dt(ct, gamma)
    den, dden = f_and_dt(1.0, float(sun_zenith))
    ratio = (num / den)
    dratio = (dnum * den - num * dden) / (den * den)
    return ratio, dratio
