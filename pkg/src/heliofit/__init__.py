"""Parametric HDR sky toolkit: evaluate, fit, relight, score."""

from .geometry import Direction, angle_between, direction_to_skyangular, skyangular_to_direction
from .sky import (
    ColorRGB,
    LMParams,
    PerezCoefficients,
    eval_lm,
    eval_sky,
    eval_sun,
    perez_ratio,
    preetham_coefficients,
)
from .envmap import (
    HdrImage,
    SolidAngleMap,
    flip_x,
    flip_y,
    percentile_expose,
    render_lm_dome,
    rotate_azimuth,
    solid_angles,
    tonemap_forward,
    tonemap_inverse,
)
from .hdrio import HdrIoError, MalformedHeaderError, TruncatedPayloadError, UnsupportedFormatError, read_hdr, write_hdr
from .transport import (
    SceneSpec,
    TransportMatrix,
    apply_transport,
    build_transport,
    load_transport,
    render_loss_l1,
    render_mirror_sphere,
    save_transport,
)
from .solar import solar_position
from .fitting import (
    AdamState,
    FitConfig,
    FitResult,
    adam_step,
    color_regularization,
    fit,
    grid_search_coarse,
    grid_search_fine,
    init_colors,
    locate_sun,
    optimize_all,
    optimize_colors,
    smoothing_loss_l1,
)
from .metrics import WeatherBin, cloud_coverage, evaluate_batch, rmse, si_rmse, weather_bin

__version__ = "0.1.0"
