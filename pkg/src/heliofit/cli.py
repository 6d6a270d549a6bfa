"""Command-line surface.

Exit codes: 0 success, 2 validation failure or fit rejection, 3 I/O error,
4 internal error.  All numeric interchange uses PFM/JSONL; PNG only exists
on the HTTP side.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from datetime import datetime

import numpy as np

from .config import load_config
from .envmap import render_lm_dome
from .fitting import fit
from .geometry import Direction
from .hdrio import HdrIoError, read_hdr, write_hdr
from .metrics import cloud_coverage, rmse, si_rmse, weather_bin
from .sky import LMParams
from .transport import (
    SceneSpec,
    apply_transport,
    build_transport,
    load_transport,
    render_mirror_sphere,
    save_transport,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_INTERNAL = 4


class ValidationFailure(Exception):
    pass


class RejectionFailure(Exception):
    pass


def _add_param_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--params-file", help="JSON file with the 11 flat parameter fields")
    p.add_argument("--sky-color", nargs=3, type=float, metavar=("R", "G", "B"))
    p.add_argument("--turbidity", type=float)
    p.add_argument("--sun-color", nargs=3, type=float, metavar=("R", "G", "B"))
    p.add_argument("--beta", type=float)
    p.add_argument("--kappa", type=float)
    p.add_argument("--sun-zenith-deg", type=float)
    p.add_argument("--sun-azimuth-deg", type=float)


def _params_from_args(args) -> LMParams:
    if args.params_file:
        with open(args.params_file) as f:
            return LMParams.from_dict(json.load(f))
    needed = (
        args.sky_color, args.turbidity, args.sun_color,
        args.beta, args.kappa, args.sun_zenith_deg, args.sun_azimuth_deg,
    )
    if any(v is None for v in needed):
        raise ValidationFailure(
            "provide either --params-file or all of --sky-color --turbidity "
            "--sun-color --beta --kappa --sun-zenith-deg --sun-azimuth-deg"
        )
    return LMParams.from_dict(
        {
            "sky_color_r": args.sky_color[0],
            "sky_color_g": args.sky_color[1],
            "sky_color_b": args.sky_color[2],
            "turbidity": args.turbidity,
            "sun_color_r": args.sun_color[0],
            "sun_color_g": args.sun_color[1],
            "sun_color_b": args.sun_color[2],
            "beta": args.beta,
            "kappa": args.kappa,
            "sun_zenith_rad": math.radians(args.sun_zenith_deg),
            "sun_azimuth_rad": math.radians(args.sun_azimuth_deg),
        }
    )


def cmd_render(args) -> int:
    params = _params_from_args(args)
    img = render_lm_dome(params, args.size, args.projection)
    write_hdr(args.out, img)
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    img = read_hdr(args.input)
    sun = None
    lat = lon = ts = None
    if args.sun is not None:
        sun = Direction(math.radians(args.sun[0]), math.radians(args.sun[1]))
    elif args.lat is not None and args.lon is not None and args.time is not None:
        lat, lon = args.lat, args.lon
        ts = datetime.fromisoformat(args.time)
    transport = load_transport(args.transport) if args.transport else None
    result = fit(
        img, sun=sun, latitude=lat, longitude=lon, timestamp=ts,
        cfg=cfg.fit, transport=transport,
    )
    record = result.to_record(args.id)
    with open(args.out, "a") as f:
        f.write(json.dumps(record, sort_keys=True) + "\n")
    if result.flags.get("rejected_zenith"):
        print(f"rejected: sun zenith {result.params.sun.zenith_deg:.1f} deg "
              f"exceeds the {cfg.fit.zenith_cutoff_deg:.0f} deg cutoff", file=sys.stderr)
        raise RejectionFailure()
    print(json.dumps(record, sort_keys=True))
    return EXIT_OK


def cmd_transport(args) -> int:
    cfg = load_config(args.config)
    scene = cfg.scene
    T = build_transport(scene, args.env_size)
    save_transport(args.out, T)
    print(f"transport {T.render_pixels}x{T.env_pixels}, nnz {T.weights.nnz} -> {args.out}")
    return EXIT_OK


def cmd_relight(args) -> int:
    T = load_transport(args.transport)
    env = read_hdr(args.env)
    out = apply_transport(T, env)
    write_hdr(args.out, out)
    if args.mirror_out:
        write_hdr(args.mirror_out, render_mirror_sphere(env, args.mirror_size))
    return EXIT_OK


def cmd_metrics(args) -> int:
    ref = read_hdr(args.reference)
    test = read_hdr(args.test)
    vals = {
        "rmse_texture": rmse(test, ref),
        "si_rmse_texture": si_rmse(test, ref),
    }
    if args.transport:
        T = load_transport(args.transport)
        rr = apply_transport(T, ref)
        rt = apply_transport(T, test)
        vals["rmse_render"] = rmse(rt, rr)
        vals["si_rmse_render"] = si_rmse(rt, rr)
    if args.json:
        print(json.dumps(vals, sort_keys=True))
    else:
        for k in sorted(vals):
            print(f"{k}: {vals[k]:.6g}")
    return EXIT_OK


def cmd_classify(args) -> int:
    cfg = load_config(args.config)
    img = read_hdr(args.env)
    if args.sun is not None:
        sun = Direction(math.radians(args.sun[0]), math.radians(args.sun[1]))
    else:
        from .fitting import locate_sun

        sun = locate_sun(img)
    coverage = cloud_coverage(img, sun, cfg.tau_cloud)
    wbin = weather_bin(coverage, sun.zenith_deg)
    print(json.dumps(
        {"coverage": coverage, "category": wbin.category,
         "sun_zenith_deg": sun.zenith_deg},
        sort_keys=True,
    ))
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = load_config(args.config)
    if args.port is not None:
        import dataclasses

        cfg = dataclasses.replace(cfg, service=dataclasses.replace(cfg.service, port=args.port))
    if args.static_dir is not None:
        import dataclasses

        cfg = dataclasses.replace(
            cfg, service=dataclasses.replace(cfg.service, static_dir=args.static_dir)
        )
    app = create_app(cfg)
    uvicorn.run(app, host=args.host, port=cfg.service.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heliofit", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render a parametric sky dome to PFM/HDR")
    _add_param_args(p)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--projection", default="skyangular",
                   choices=["skyangular", "equirect_hemisphere"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("fit", help="fit the 11 parameters to an HDR sky dome")
    p.add_argument("input")
    p.add_argument("--sun", nargs=2, type=float, metavar=("ZENITH_DEG", "AZIMUTH_DEG"))
    p.add_argument("--lat", type=float)
    p.add_argument("--lon", type=float)
    p.add_argument("--time", help="capture timestamp, ISO format, UTC unless offset given")
    p.add_argument("--config")
    p.add_argument("--transport", help="HFTM file; defaults to the built-in scene")
    p.add_argument("--out", required=True, help="JSONL manifest to append to")
    p.add_argument("--id", default="sky")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("transport", help="precompute the light-transport matrix")
    p.add_argument("--env-size", type=int, default=128)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_transport)

    p = sub.add_parser("relight", help="apply a transport matrix to an environment")
    p.add_argument("--transport", required=True)
    p.add_argument("--env", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mirror-out", help="also write a mirror-ball preview")
    p.add_argument("--mirror-size", type=int, default=128)
    p.set_defaults(func=cmd_relight)

    p = sub.add_parser("metrics", help="compare two HDR images")
    p.add_argument("reference")
    p.add_argument("test")
    p.add_argument("--transport", help="also report render-space metrics")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("classify", help="cloud coverage and weather bin")
    p.add_argument("env")
    p.add_argument("--sun", nargs=2, type=float, metavar=("ZENITH_DEG", "AZIMUTH_DEG"))
    p.add_argument("--config")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int)
    p.add_argument("--static-dir")
    p.add_argument("--config")
    p.set_defaults(func=cmd_serve)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RejectionFailure:
        return EXIT_VALIDATION
    except (ValidationFailure, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, HdrIoError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
