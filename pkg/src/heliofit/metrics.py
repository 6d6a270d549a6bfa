"""Radiometric metrics, cloud coverage, and weather binning.

RMSE is computed over valid pixels and channels; its scale-invariant
counterpart first finds the single scalar alpha = <a,b>/<a,a> (all channels
jointly) that best exposes a onto b.  Cloud coverage thresholds the
blue-minus-red difference of the display-mapped image; the weather bins are
eighths of sky coverage, with a sunrise/sunset override when the sun sits
within 20 degrees of the horizon.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .envmap import HdrImage, percentile_expose, solid_angles, tonemap_forward
from .geometry import Direction
from .transport import TransportMatrix, apply_transport

CATEGORIES = (
    "sunny",
    "mostly_sunny",
    "partly_cloudy",
    "mostly_cloudy",
    "overcast",
    "sunrise_sunset",
)
_SHORT = {
    "sunny": "su",
    "mostly_sunny": "ms",
    "partly_cloudy": "pc",
    "mostly_cloudy": "mc",
    "overcast": "oc",
    "sunrise_sunset": "ss",
}

DEFAULT_CLOUD_TAU = 0.08
SUNSET_ZENITH_DEG = 70.0  # sun within 20 degrees of the horizon


@dataclass(frozen=True)
class WeatherBin:
    category: str
    coverage: float
    sun_zenith_deg: float

    @property
    def short(self) -> str:
        return _SHORT[self.category]


def _joint_valid(a: HdrImage, b: HdrImage) -> np.ndarray:
    if a.data.shape != b.data.shape:
        raise ValueError("image geometry mismatch")
    return a.mask & b.mask


def rmse(a: HdrImage, b: HdrImage) -> float:
    m = _joint_valid(a, b)
    d = a.data[m] - b.data[m]
    return float(np.sqrt(np.mean(d * d)))


def si_rmse(a: HdrImage, b: HdrImage) -> float:
    """RMSE after the optimal global rescale of a; zero iff b is a
    non-negative multiple of a."""
    m = _joint_valid(a, b)
    av = a.data[m].ravel()
    bv = b.data[m].ravel()
    denom = float(av @ av)
    alpha = float(av @ bv) / denom if denom > 0.0 else 0.0
    d = alpha * av - bv
    return float(np.sqrt(np.mean(d * d)))


def cloud_coverage(
    img: HdrImage,
    sun: Direction,
    tau: float = DEFAULT_CLOUD_TAU,
    sun_mask_radius_deg: float = 30.0,
) -> float:
    """Solid-angle-weighted fraction of cloudy pixels outside the sun disk.

    A pixel is cloud when blue - red <= tau on the display-mapped image
    (percentile-exposed, log-tonemapped, rescaled to [0, 1]).
    """
    exposed, _ = percentile_expose(img)
    display = np.clip((tonemap_forward(exposed.data) + 1.0) / 2.0, 0.0, 1.0)
    diff = display[..., 2] - display[..., 0]

    zen, az = img.pixel_directions()
    sz = np.sin(zen, where=img.mask, out=np.zeros_like(zen))
    cz = np.cos(zen, where=img.mask, out=np.zeros_like(zen))
    sv = sun.to_vector()
    cosd = sz * np.cos(az, where=img.mask, out=np.zeros_like(az)) * sv[0]
    cosd += sz * np.sin(az, where=img.mask, out=np.zeros_like(az)) * sv[1]
    cosd += cz * sv[2]
    outside = cosd < math.cos(math.radians(sun_mask_radius_deg))

    dom = solid_angles(img).weights
    considered = img.mask & outside
    total = float(dom[considered].sum())
    if total <= 0.0:
        raise ValueError("sun disk covers every valid pixel")
    cloudy = considered & (diff <= tau)
    return float(dom[cloudy].sum()) / total


def weather_bin(coverage: float, sun_zenith_deg: float) -> WeatherBin:
    """Eighths-of-coverage bins, closed on the left; sunrise/sunset overrides
    everything when the sun is within 20 degrees of the horizon."""
    if not (0.0 <= coverage <= 1.0):
        raise ValueError(f"coverage {coverage} outside [0, 1]")
    if sun_zenith_deg > SUNSET_ZENITH_DEG:
        return WeatherBin("sunrise_sunset", coverage, sun_zenith_deg)
    if coverage < 1.0 / 8.0:
        cat = "sunny"
    elif coverage < 3.0 / 8.0:
        cat = "mostly_sunny"
    elif coverage < 5.0 / 8.0:
        cat = "partly_cloudy"
    elif coverage < 7.0 / 8.0:
        cat = "mostly_cloudy"
    else:
        cat = "overcast"
    return WeatherBin(cat, coverage, sun_zenith_deg)


# ---------------------------------------------------------------------------
# Batch evaluation
# ---------------------------------------------------------------------------

_METRIC_ROWS = ("fid", "rmse_texture", "si_rmse_texture", "rmse_render", "si_rmse_render")


@dataclass
class EvalReport:
    """Per-bin means of each metric plus the overall column."""

    table: dict  # metric -> {bin short name or "all": value or None}
    counts: dict  # bin short name -> number of entries

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        cols = [_SHORT[c] for c in CATEGORIES] + ["all"]
        writer.writerow(["metric"] + cols)
        for metric in _METRIC_ROWS:
            row = [metric]
            for c in cols:
                val = self.table[metric].get(c)
                row.append("n/a" if val is None else f"{val:.6g}")
            writer.writerow(row)
        return buf.getvalue()

    def to_text(self) -> str:
        cols = [_SHORT[c] for c in CATEGORIES] + ["all"]
        width = 16
        lines = ["".join(["metric".ljust(width)] + [c.rjust(10) for c in cols])]
        for metric in _METRIC_ROWS:
            cells = []
            for c in cols:
                val = self.table[metric].get(c)
                cells.append(("n/a" if val is None else f"{val:.4g}").rjust(10))
            lines.append("".join([metric.ljust(width)] + cells))
        lines.append(
            "".join(["count".ljust(width)] + [str(self.counts.get(c, 0)).rjust(10) for c in cols])
        )
        return "\n".join(lines)


def _find_image(directory: str, stem: str) -> str:
    for ext in (".pfm", ".hdr"):
        p = os.path.join(directory, stem + ext)
        if os.path.exists(p):
            return p
    raise FileNotFoundError(f"no {stem}.pfm or {stem}.hdr under {directory}")


def evaluate_batch(
    manifest_path: str,
    reference_dir: str,
    candidate_dir: str,
    T: TransportMatrix | None = None,
    tau: float = DEFAULT_CLOUD_TAU,
) -> EvalReport:
    """Score candidate skies against references, binned by the reference's
    cloudiness; the manifest is the fitter's JSONL (one record per entry)."""
    from .hdrio import read_hdr

    entries = []
    with open(manifest_path) as f:
        for line in f:
            line = line.strip()
            if line:
                entries.append(json.loads(line))
    per_bin: dict[str, dict[str, list]] = {}
    for rec in entries:
        ref = read_hdr(_find_image(reference_dir, rec["id"]))
        cand = read_hdr(_find_image(candidate_dir, rec["id"]))
        sun = Direction(rec["sun_zenith_rad"], rec["sun_azimuth_rad"])
        coverage = cloud_coverage(ref, sun, tau)
        wbin = weather_bin(coverage, sun.zenith_deg)
        vals = {
            "rmse_texture": rmse(cand, ref),
            "si_rmse_texture": si_rmse(cand, ref),
        }
        if T is not None:
            rr = apply_transport(T, ref)
            rc = apply_transport(T, cand)
            vals["rmse_render"] = rmse(rc, rr)
            vals["si_rmse_render"] = si_rmse(rc, rr)
        bucket = per_bin.setdefault(wbin.short, {})
        for k, v in vals.items():
            bucket.setdefault(k, []).append(v)

    table: dict = {m: {} for m in _METRIC_ROWS}
    counts: dict = {}
    all_vals: dict[str, list] = {}
    for short, bucket in per_bin.items():
        counts[short] = len(next(iter(bucket.values()))) if bucket else 0
        for metric, vals in bucket.items():
            table[metric][short] = float(np.mean(vals))
            all_vals.setdefault(metric, []).extend(vals)
    for metric, vals in all_vals.items():
        table[metric]["all"] = float(np.mean(vals))
    counts["all"] = sum(v for k, v in counts.items() if k != "all")
    # FID needs a pretrained feature extractor; the column stays n/a
    table["fid"] = {}
    return EvalReport(table=table, counts=counts)
