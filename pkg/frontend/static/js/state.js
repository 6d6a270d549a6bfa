/**
 * Slider-panel state: the eleven sky parameters plus display exposure.
 *
 * Bounds come from the server (/api/presets) so the panel can never submit
 * an out-of-range value; out-of-range inputs are clamped on the way in.
 */
export const PARAM_FIELDS = [
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
];
export class ParamPanelState {
    constructor(ranges, initial) {
        this.ranges = ranges;
        this.values = {};
        this.exposure = 0; // display EV, applied server-side via the exposure query arg
        this.preset = null;
        for (const f of PARAM_FIELDS) {
            const [lo, hi] = this.ranges[f];
            this.values[f] = initial ? this.clamp(f, initial[f]) : (lo + hi) / 2;
        }
    }
    clamp(field, value) {
        const [lo, hi] = this.ranges[field];
        if (!Number.isFinite(value))
            return lo;
        return Math.min(hi, Math.max(lo, value));
    }
    set(field, value) {
        const v = this.clamp(field, value);
        this.values[field] = v;
        this.preset = null;
        return v;
    }
    adopt(params, preset = null) {
        for (const f of PARAM_FIELDS)
            this.values[f] = this.clamp(f, params[f]);
        this.preset = preset;
    }
    snapshot() {
        return { ...this.values };
    }
}
