"""Sun position from geolocation and UTC time.

Implements the Astronomer's Almanac low-precision formulas (declination via
ecliptic longitude, hour angle via sidereal time), good to well under half a
degree between 1950 and 2050.  Azimuth is measured from north, eastward;
mapping it into a capture's image azimuth is a per-rig calibration and is the
caller's business.
"""

from __future__ import annotations

import math
from datetime import datetime, timezone

from .geometry import Direction

_DEG = math.pi / 180.0


def _to_utc(when: datetime) -> datetime:
    if not isinstance(when, datetime):
        raise ValueError(f"timestamp must be a datetime, got {type(when).__name__}")
    if when.tzinfo is None:
        return when.replace(tzinfo=timezone.utc)
    return when.astimezone(timezone.utc)


def solar_position(latitude_deg: float, longitude_deg: float, when: datetime) -> Direction:
    """Sun (zenith, azimuth-from-north) for an observer and UTC instant.

    Naive datetimes are taken as UTC.  Below-horizon suns come back with
    zenith > pi/2.  Years outside [1900, 2100] are rejected: the almanac
    fit is not trustworthy there.
    """
    if not (-90.0 <= latitude_deg <= 90.0):
        raise ValueError(f"latitude {latitude_deg} outside [-90, 90]")
    if not (-180.0 <= longitude_deg <= 360.0):
        raise ValueError(f"longitude {longitude_deg} out of range")
    when = _to_utc(when)
    if not (1900 <= when.year <= 2100):
        raise ValueError(f"year {when.year} outside supported range [1900, 2100]")

    doy = when.timetuple().tm_yday
    hour = when.hour + when.minute / 60.0 + when.second / 3600.0 + when.microsecond / 3.6e9
    delta = when.year - 1949
    leap = delta // 4
    jd = 32916.5 + delta * 365.0 + leap + doy + hour / 24.0
    t = jd - 51545.0  # days since J2000.0

    mnlong = (280.460 + 0.9856474 * t) % 360.0
    mnanom = ((357.528 + 0.9856003 * t) % 360.0) * _DEG
    eclong = ((mnlong + 1.915 * math.sin(mnanom) + 0.020 * math.sin(2.0 * mnanom)) % 360.0) * _DEG
    oblqec = (23.439 - 0.0000004 * t) * _DEG

    ra = math.atan2(math.cos(oblqec) * math.sin(eclong), math.cos(eclong)) % (2.0 * math.pi)
    dec = math.asin(math.sin(oblqec) * math.sin(eclong))

    gmst = (6.697375 + 0.0657098242 * t + hour) % 24.0
    lmst = ((gmst + longitude_deg / 15.0) % 24.0) * 15.0 * _DEG
    ha = lmst - ra
    ha = (ha + math.pi) % (2.0 * math.pi) - math.pi

    lat = latitude_deg * _DEG
    sin_el = math.sin(dec) * math.sin(lat) + math.cos(dec) * math.cos(lat) * math.cos(ha)
    el = math.asin(max(-1.0, min(1.0, sin_el)))
    az = math.atan2(
        -math.cos(dec) * math.sin(ha),
        math.sin(dec) * math.cos(lat) - math.cos(dec) * math.sin(lat) * math.cos(ha),
    )
    return Direction(zenith=math.pi / 2.0 - el, azimuth=az)
