#!/usr/bin/env python3
"""Synthetic round-trip study: render domes from random parameters, fit them
back, and report sun/texture/render recovery errors.

Paper-faithful defaults (1000 Adam iterations per stage); use --iterations to
trade fidelity for speed.  Results append to a JSONL manifest so runs can be
compared across configurations.
"""

import argparse
import json
import math
import time

import numpy as np

from heliofit.envmap import render_lm_dome
from heliofit.fitting import FitConfig, fit
from heliofit.geometry import Direction, angle_between
from heliofit.metrics import si_rmse
from heliofit.sky import ColorRGB, LMParams
from heliofit.transport import SceneSpec, apply_transport, build_transport


def sample_params(rng) -> LMParams:
    kappa = rng.uniform(0.0, 1.0)
    beta = rng.uniform(0.0, 50.0)
    t = rng.uniform(2.0, 20.0)
    zen = math.radians(rng.uniform(5.0, 70.0))
    az = rng.uniform(0.0, 2.0 * math.pi)
    sky_lum = rng.uniform(0.1, 0.6)
    blue = rng.uniform(0.0, 0.5)
    c_sky = sky_lum * np.array([1 - 0.6 * blue, 1 - 0.15 * blue, 1 + blue])
    sun_lum = 10.0 ** rng.uniform(0.8, 1.7)
    warm = rng.uniform(0.0, 0.3)
    c_sun = sun_lum * np.array([1 + warm, 1.0, 1 - warm])
    return LMParams(
        sky_color=ColorRGB.from_array(c_sky), turbidity=t,
        sun_color=ColorRGB.from_array(c_sun), beta=beta, kappa=kappa,
        sun=Direction(zen, az),
    )


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=20)
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--iterations", type=int, default=1000)
    ap.add_argument("--patience", type=int, default=None)
    ap.add_argument("--out", default="roundtrip_results.jsonl")
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    cfg = FitConfig(iterations=args.iterations, early_stop_patience=args.patience)
    print(f"building transport matrix at {args.size}^2 ...")
    T = build_transport(SceneSpec(), args.size)

    rows = []
    for i in range(args.count):
        truth = sample_params(rng)
        target = render_lm_dome(truth, args.size)
        t0 = time.time()
        res = fit(target, cfg=cfg, transport=T)
        wall = time.time() - t0
        fitted = render_lm_dome(res.params, args.size)
        sun_err = math.degrees(angle_between(res.params.sun, truth.sun))
        tex = si_rmse(fitted, target) / target.data[target.mask].mean()
        rt = apply_transport(T, target)
        ren = si_rmse(apply_transport(T, fitted), rt) / rt.data.mean()
        row = {
            "index": i,
            "sun_err_deg": sun_err,
            "texture_si_rel": tex,
            "render_si_rel": ren,
            "seconds": wall,
            "truth": truth.to_dict(),
            "fitted": res.params.to_dict(),
            "losses": res.losses,
        }
        rows.append(row)
        with open(args.out, "a") as f:
            f.write(json.dumps(row, sort_keys=True) + "\n")
        print(f"sky {i:3d}: sun {sun_err:8.4f} deg | texture {tex:7.4f} | "
              f"render {ren:7.4f} | {wall:6.1f}s")

    sun = [r["sun_err_deg"] for r in rows]
    tex = [r["texture_si_rel"] for r in rows]
    ren = [r["render_si_rel"] for r in rows]
    print(f"\nworst: sun {max(sun):.4f} deg, texture {max(tex):.4f}, render {max(ren):.4f}")
    print(f"mean:  sun {np.mean(sun):.4f} deg, texture {np.mean(tex):.4f}, "
          f"render {np.mean(ren):.4f}")


if __name__ == "__main__":
    main()
