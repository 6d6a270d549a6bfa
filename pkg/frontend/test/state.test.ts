import { describe, expect, it } from "vitest";

import { ParamPanelState, PARAM_FIELDS } from "../src/state.js";
import type { Ranges } from "../src/api.js";

const RANGES: Ranges = {
  sky_color_r: [0, 5],
  sky_color_g: [0, 5],
  sky_color_b: [0, 5],
  turbidity: [2, 20],
  sun_color_r: [0, 1000],
  sun_color_g: [0, 1000],
  sun_color_b: [0, 1000],
  beta: [0, 50],
  kappa: [0, 1],
  sun_zenith_rad: [0, 1.396],
  sun_azimuth_rad: [0, 6.283],
};

describe("ParamPanelState", () => {
  it("starts inside the server ranges", () => {
    const s = new ParamPanelState(RANGES);
    for (const f of PARAM_FIELDS) {
      const [lo, hi] = RANGES[f];
      expect(s.values[f]).toBeGreaterThanOrEqual(lo);
      expect(s.values[f]).toBeLessThanOrEqual(hi);
    }
  });

  it("clamps out-of-range input so bad values cannot be submitted", () => {
    const s = new ParamPanelState(RANGES);
    expect(s.set("kappa", 2.5)).toBe(1);
    expect(s.set("kappa", -1)).toBe(0);
    expect(s.set("turbidity", 0)).toBe(2);
    expect(s.set("sun_zenith_rad", 9)).toBeCloseTo(1.396);
    expect(s.set("beta", NaN)).toBe(0);
  });

  it("adopting fitted parameters clamps and clears the preset", () => {
    const s = new ParamPanelState(RANGES);
    s.preset = "sunny";
    s.adopt({ ...s.values, kappa: 0.37, beta: 99 });
    expect(s.values.kappa).toBe(0.37);
    expect(s.values.beta).toBe(50);
    expect(s.preset).toBeNull();
  });

  it("snapshots are detached copies", () => {
    const s = new ParamPanelState(RANGES);
    const snap = s.snapshot();
    s.set("kappa", 0.9);
    expect(snap.kappa).not.toBe(0.9);
  });
});
