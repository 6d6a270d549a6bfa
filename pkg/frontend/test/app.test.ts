import { describe, expect, it } from "vitest";

import type { ApiClient, ClassifyRecord } from "../src/api.js";
import { StudioController } from "../src/app.js";

const RANGES: Record<string, [number, number]> = {
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

interface MockLog {
  pngUrls: string[];
  classifies: number;
}

function mockApi(log: MockLog, pngByUrl: (url: string) => Uint8Array) {
  const api = {
    renderUrl: (p: Record<string, number>, size: number, exposure: number) =>
      `/api/render?kappa=${p.kappa}&size=${size}&exposure=${exposure}`,
    relightUrl: (p: Record<string, number>, size: number, exposure: number) =>
      `/api/relight?kappa=${p.kappa}&size=${size}&exposure=${exposure}`,
    fetchPng: async (url: string) => {
      log.pngUrls.push(url);
      return pngByUrl(url);
    },
    classify: async (): Promise<ClassifyRecord> => {
      log.classifies += 1;
      return { coverage: 0.9, category: "overcast", sun_zenith_deg: 40 };
    },
  };
  return api as unknown as ApiClient;
}

function makeController(log: MockLog, sinks: Partial<Record<string, unknown>> = {}) {
  const shown: Record<string, Uint8Array | null> = { sky: null, relight: null };
  let classified: ClassifyRecord | null = null;
  const api = mockApi(log, (url) => new TextEncoder().encode(`png-for:${url}`));
  const controller = new StudioController(
    api,
    RANGES,
    {
      sky: (b) => (shown.sky = b),
      relight: (b) => (shown.relight = b),
      classify: (c) => (classified = c),
      error: () => {},
      ...(sinks as object),
    },
    { sky: 64, relight: 48 },
    2,
  );
  return { controller, shown, classified: () => classified };
}

describe("StudioController", () => {
  it("a slider burst settles into exactly one request per pane", async () => {
    const log: MockLog = { pngUrls: [], classifies: 0 };
    const { controller } = makeController(log);
    for (let i = 0; i <= 40; i++) controller.onParamChange("kappa", i / 40);
    await controller.settled();
    const renders = log.pngUrls.filter((u) => u.startsWith("/api/render"));
    const relights = log.pngUrls.filter((u) => u.startsWith("/api/relight"));
    expect(renders).toHaveLength(1);
    expect(relights).toHaveLength(1);
    expect(log.classifies).toBe(1);
    expect(controller.skyPane.requestCount).toBe(1);
    expect(controller.relightPane.requestCount).toBe(1);
  });

  it("displayed bytes are exactly the server response", async () => {
    const log: MockLog = { pngUrls: [], classifies: 0 };
    const { controller, shown } = makeController(log);
    controller.onParamChange("kappa", 0.5);
    await controller.settled();
    const url = log.pngUrls.find((u) => u.startsWith("/api/render"))!;
    expect(new TextDecoder().decode(shown.sky!)).toBe(`png-for:${url}`);
  });

  it("requests round-trip the exact slider values (no local recompute)", async () => {
    const log: MockLog = { pngUrls: [], classifies: 0 };
    const { controller } = makeController(log);
    controller.onParamChange("kappa", 0.337);
    await controller.settled();
    expect(log.pngUrls[0]).toContain("kappa=0.337");
  });

  it("classification readout comes from the API, not local math", async () => {
    const log: MockLog = { pngUrls: [], classifies: 0 };
    const { controller, classified } = makeController(log);
    controller.onParamChange("kappa", 0.9);
    await controller.settled();
    expect(classified()).toEqual({
      coverage: 0.9,
      category: "overcast",
      sun_zenith_deg: 40,
    });
  });

  it("out-of-range slider input is clamped before any request", async () => {
    const log: MockLog = { pngUrls: [], classifies: 0 };
    const { controller } = makeController(log);
    const used = controller.onParamChange("kappa", 7.0);
    expect(used).toBe(1);
    await controller.settled();
    expect(log.pngUrls[0]).toContain("kappa=1");
  });

  it("adopting fitted parameters refreshes the panes", async () => {
    const log: MockLog = { pngUrls: [], classifies: 0 };
    const { controller } = makeController(log);
    controller.adoptFitted({ ...controller.state.snapshot(), kappa: 0.25 });
    await controller.settled();
    expect(controller.state.values.kappa).toBe(0.25);
    expect(log.pngUrls.some((u) => u.includes("kappa=0.25"))).toBe(true);
  });
});
