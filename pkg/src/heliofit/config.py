"""TOML configuration with HELIOFIT_ environment-variable overrides.

Flat sections map onto the dataclass configs:

    [fit]        -> fitting.FitConfig fields
    [scene]      -> transport.SceneSpec fields
    [service]    -> ServiceConfig fields
    [metrics]    tau_cloud

An env var HELIOFIT_<SECTION>_<KEY> (e.g. HELIOFIT_FIT_ITERATIONS=200)
overrides the file value.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .fitting import FitConfig
from .metrics import DEFAULT_CLOUD_TAU
from .transport import SceneSpec

ENV_PREFIX = "HELIOFIT_"


@dataclass(frozen=True)
class ServiceConfig:
    port: int = 8707
    static_dir: str | None = None
    upload_limit_bytes: int = 64 * 1024 * 1024
    persist_path: str | None = None
    env_size: int = 128


@dataclass(frozen=True)
class AppConfig:
    fit: FitConfig = FitConfig()
    scene: SceneSpec = SceneSpec()
    service: ServiceConfig = ServiceConfig()
    tau_cloud: float = DEFAULT_CLOUD_TAU


def _coerce(current, raw: str):
    if isinstance(current, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, tuple):
        return tuple(float(x) for x in raw.split(","))
    return raw


def _apply_section(cls_instance, section: dict, env_section: str):
    values = dict(section)
    for f in dataclasses.fields(cls_instance):
        env_key = f"{ENV_PREFIX}{env_section}_{f.name}".upper()
        if env_key in os.environ:
            values[f.name] = _coerce(getattr(cls_instance, f.name), os.environ[env_key])
    unknown = set(values) - {f.name for f in dataclasses.fields(cls_instance)}
    if unknown:
        raise ValueError(f"unknown [{env_section.lower()}] keys: {sorted(unknown)}")
    converted = {}
    for k, v in values.items():
        cur = getattr(cls_instance, k)
        if isinstance(cur, tuple) and isinstance(v, list):
            v = tuple(v)
        converted[k] = v
    return dataclasses.replace(cls_instance, **converted)


def load_config(path: str | None = None) -> AppConfig:
    doc: dict = {}
    if path is not None:
        with open(path, "rb") as f:
            doc = tomllib.load(f)
    fit = _apply_section(FitConfig(), doc.get("fit", {}), "FIT")
    scene = _apply_section(SceneSpec(), doc.get("scene", {}), "SCENE")
    service = _apply_section(ServiceConfig(), doc.get("service", {}), "SERVICE")
    tau = doc.get("metrics", {}).get("tau_cloud", DEFAULT_CLOUD_TAU)
    tau_env = os.environ.get(f"{ENV_PREFIX}METRICS_TAU_CLOUD")
    if tau_env is not None:
        tau = float(tau_env)
    return AppConfig(fit=fit, scene=scene, service=service, tau_cloud=float(tau))
