"""Named parameter sets, one per weather category, plus the UI-facing
parameter ranges (single source of truth for slider bounds)."""

from __future__ import annotations

import math

from .geometry import Direction
from .sky import (
    BETA_RANGE,
    KAPPA_RANGE,
    SUN_ZENITH_CUTOFF_DEG,
    TURBIDITY_RANGE,
    ColorRGB,
    LMParams,
)

PARAM_RANGES = {
    "sky_color_r": (0.0, 5.0),
    "sky_color_g": (0.0, 5.0),
    "sky_color_b": (0.0, 5.0),
    "turbidity": TURBIDITY_RANGE,
    "sun_color_r": (0.0, 1000.0),
    "sun_color_g": (0.0, 1000.0),
    "sun_color_b": (0.0, 1000.0),
    "beta": BETA_RANGE,
    "kappa": KAPPA_RANGE,
    "sun_zenith_rad": (0.0, math.radians(SUN_ZENITH_CUTOFF_DEG)),
    "sun_azimuth_rad": (0.0, 2.0 * math.pi),
}


def _p(sky, t, sun_c, beta, kappa, zen_deg, az_deg=90.0) -> LMParams:
    return LMParams(
        sky_color=ColorRGB(*sky),
        turbidity=t,
        sun_color=ColorRGB(*sun_c),
        beta=beta,
        kappa=kappa,
        sun=Direction(math.radians(zen_deg), math.radians(az_deg)),
    )


PRESETS = {
    "sunny": _p((0.10, 0.22, 0.45), 2.4, (60.0, 52.0, 42.0), 32.0, 0.04, 38.0),
    "mostly_sunny": _p((0.16, 0.24, 0.38), 3.2, (40.0, 34.0, 28.0), 22.0, 0.08, 45.0),
    "partly_cloudy": _p((0.24, 0.28, 0.36), 5.0, (18.0, 16.0, 14.0), 10.0, 0.22, 50.0),
    "mostly_cloudy": _p((0.30, 0.32, 0.36), 7.5, (5.0, 4.8, 4.6), 4.0, 0.45, 55.0),
    "overcast": _p((0.34, 0.35, 0.36), 10.0, (0.9, 0.9, 0.9), 2.0, 0.8, 60.0),
    "sunrise_sunset": _p((0.30, 0.18, 0.22), 4.0, (30.0, 12.0, 4.0), 12.0, 0.10, 78.0),
}
