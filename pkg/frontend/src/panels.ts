/**
 * DOM construction: left parameter rail, right preview panes, bottom fit
 * drawer.  Kept as thin glue over the controller so the logic stays testable
 * without a browser.
 */

import { ApiClient, MetricsRecord, ParamRecord, Ranges } from "./api.js";
import { StudioController } from "./app.js";
import { FitFlow } from "./fitflow.js";
import { PARAM_FIELDS, ParamField } from "./state.js";

const LABELS: Record<string, string> = {
  sky_color_r: "sky R",
  sky_color_g: "sky G",
  sky_color_b: "sky B",
  turbidity: "turbidity",
  sun_color_r: "sun R",
  sun_color_g: "sun G",
  sun_color_b: "sun B",
  beta: "beta",
  kappa: "kappa",
  sun_zenith_rad: "sun zenith",
  sun_azimuth_rad: "sun azimuth",
};

function showPng(img: HTMLImageElement, bytes: Uint8Array): void {
  const blob = new Blob([bytes.buffer as ArrayBuffer], { type: "image/png" });
  const url = URL.createObjectURL(blob);
  const old = img.src;
  img.src = url;
  if (old.startsWith("blob:")) URL.revokeObjectURL(old);
}

export function buildStudio(
  root: HTMLElement,
  api: ApiClient,
  ranges: Ranges,
  presets: Record<string, ParamRecord>,
): StudioController {
  root.innerHTML = `
    <div class="studio">
      <aside class="rail">
        <h1>sky studio</h1>
        <label class="row">preset
          <select id="preset"><option value="">custom</option></select>
        </label>
        <div id="sliders"></div>
        <label class="row">exposure (EV)
          <input id="exposure" type="range" min="-6" max="6" step="0.25" value="0">
          <span id="exposure-val">0.0</span>
        </label>
        <div id="classify" class="readout">coverage: &ndash;</div>
      </aside>
      <main class="panes">
        <figure><img id="pane-sky" alt="sky dome"><figcaption>sky dome</figcaption></figure>
        <figure class="strip"><img id="pane-relight" alt="diffuse render and mirror ball">
          <figcaption>diffuse scene &middot; mirror ball</figcaption></figure>
      </main>
      <footer class="drawer">
        <label>fit an HDR capture (.pfm / .hdr)
          <input id="upload" type="file" accept=".pfm,.hdr">
        </label>
        <span id="fit-status" class="readout">idle</span>
        <span id="metrics" class="readout"></span>
      </footer>
    </div>`;

  const skyImg = root.querySelector<HTMLImageElement>("#pane-sky")!;
  const relightImg = root.querySelector<HTMLImageElement>("#pane-relight")!;
  const classifyEl = root.querySelector<HTMLElement>("#classify")!;
  const statusEl = root.querySelector<HTMLElement>("#fit-status")!;
  const metricsEl = root.querySelector<HTMLElement>("#metrics")!;

  const controller = new StudioController(api, ranges, {
    sky: (b) => showPng(skyImg, b),
    relight: (b) => showPng(relightImg, b),
    classify: (c) =>
      (classifyEl.textContent =
        `coverage: ${(c.coverage * 100).toFixed(0)}% (${c.category.replace("_", " ")})`),
    error: (ctx, err) => (statusEl.textContent = `${ctx} error: ${String(err)}`),
  });

  const sliders = root.querySelector<HTMLElement>("#sliders")!;
  const inputs: Partial<Record<ParamField, HTMLInputElement>> = {};
  for (const field of PARAM_FIELDS) {
    const [lo, hi] = ranges[field];
    const row = document.createElement("label");
    row.className = "row";
    row.textContent = LABELS[field];
    const input = document.createElement("input");
    input.type = "range";
    input.min = String(lo);
    input.max = String(hi);
    input.step = String((hi - lo) / 400);
    input.value = String(controller.state.values[field]);
    const val = document.createElement("span");
    val.textContent = Number(input.value).toFixed(3);
    input.addEventListener("input", () => {
      const used = controller.onParamChange(field, Number(input.value));
      input.value = String(used);
      val.textContent = used.toFixed(3);
    });
    row.appendChild(input);
    row.appendChild(val);
    sliders.appendChild(row);
    inputs[field] = input;
  }

  const syncSliders = () => {
    for (const field of PARAM_FIELDS) {
      const input = inputs[field]!;
      input.value = String(controller.state.values[field]);
      (input.nextSibling as HTMLElement).textContent =
        controller.state.values[field].toFixed(3);
    }
  };

  const presetSel = root.querySelector<HTMLSelectElement>("#preset")!;
  for (const name of Object.keys(presets)) {
    const opt = document.createElement("option");
    opt.value = name;
    opt.textContent = name.replace("_", " ");
    presetSel.appendChild(opt);
  }
  presetSel.addEventListener("change", () => {
    if (presetSel.value) {
      controller.applyPreset(presetSel.value, presets[presetSel.value]);
      syncSliders();
    }
  });

  const exposure = root.querySelector<HTMLInputElement>("#exposure")!;
  const exposureVal = root.querySelector<HTMLElement>("#exposure-val")!;
  exposure.addEventListener("input", () => {
    controller.onExposureChange(Number(exposure.value));
    exposureVal.textContent = Number(exposure.value).toFixed(1);
  });

  const upload = root.querySelector<HTMLInputElement>("#upload")!;
  upload.addEventListener("change", async () => {
    const file = upload.files?.[0];
    if (!file) return;
    statusEl.textContent = "fitting…";
    metricsEl.textContent = "";
    const flow = new FitFlow(api);
    const outcome = await flow.run(file, file.name);
    if (outcome.rejected) {
      statusEl.textContent = "rejected: sun is beyond 80° of zenith";
      return;
    }
    if (outcome.phase !== "done" || !outcome.params) {
      statusEl.textContent = `fit failed: ${outcome.error ?? "unknown"}`;
      return;
    }
    controller.adoptFitted(outcome.params);
    syncSliders();
    statusEl.textContent = `fitted job ${outcome.jobId}`;
    try {
      const m: MetricsRecord = await api.metrics(outcome.jobId!);
      metricsEl.textContent =
        `si-RMSE texture ${m.si_rmse_texture.toFixed(4)} / render ${m.si_rmse_render.toFixed(4)}`;
    } catch (err) {
      metricsEl.textContent = `metrics unavailable: ${String(err)}`;
    }
  });

  controller.refresh();
  return controller;
}
