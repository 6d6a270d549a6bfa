#!/usr/bin/env python3
"""Render the named presets to PFM domes plus tonemapped PNG previews with
their diffuse render and mirror-ball panes."""

import argparse
import os

import numpy as np
from PIL import Image

from heliofit.envmap import percentile_expose, render_lm_dome
from heliofit.hdrio import write_hdr
from heliofit.metrics import cloud_coverage, weather_bin
from heliofit.presets import PRESETS
from heliofit.transport import SceneSpec, apply_transport, build_transport, render_mirror_sphere


def tonemap_png(linear: np.ndarray, divisor: float) -> Image.Image:
    disp = np.clip(linear / divisor, 0.0, 1.0) ** (1.0 / 2.2)
    return Image.fromarray((disp * 255.0 + 0.5).astype(np.uint8))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--out-dir", default="preset_gallery")
    args = ap.parse_args()

    os.makedirs(args.out_dir, exist_ok=True)
    T = build_transport(SceneSpec(), args.size)
    for name, params in PRESETS.items():
        dome = render_lm_dome(params, args.size)
        write_hdr(os.path.join(args.out_dir, f"{name}.pfm"), dome)
        _, divisor = percentile_expose(dome)
        diffuse = apply_transport(T, dome)
        ball = render_mirror_sphere(dome, diffuse.data.shape[0])
        strip = np.concatenate([diffuse.data, ball.data], axis=1)
        tonemap_png(dome.data, divisor).save(os.path.join(args.out_dir, f"{name}_sky.png"))
        tonemap_png(strip, divisor).save(os.path.join(args.out_dir, f"{name}_relight.png"))
        coverage = cloud_coverage(dome, params.sun)
        wbin = weather_bin(coverage, params.sun.zenith_deg)
        print(f"{name:15s} coverage {coverage:5.2f} -> {wbin.category}")


if __name__ == "__main__":
    main()
