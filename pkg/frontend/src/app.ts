/**
 * Studio controller: glues the slider state to the preview panes.
 *
 * Pure logic, no DOM: the host passes sinks that receive PNG bytes and
 * classification readouts.  One settled request per pane per change burst.
 */

import { ApiClient, ClassifyRecord, ParamRecord } from "./api.js";
import { LatestLoader } from "./previews.js";
import { ParamField, ParamPanelState } from "./state.js";

export interface PaneSinks {
  sky: (bytes: Uint8Array) => void;
  relight: (bytes: Uint8Array) => void;
  classify: (c: ClassifyRecord) => void;
  error: (context: string, err: unknown) => void;
}

export interface StudioSizes {
  sky: number;
  relight: number;
}

export class StudioController {
  readonly state: ParamPanelState;
  readonly skyPane: LatestLoader<Uint8Array>;
  readonly relightPane: LatestLoader<Uint8Array>;
  readonly classifyReadout: LatestLoader<ClassifyRecord>;

  constructor(
    private api: ApiClient,
    ranges: Record<string, [number, number]>,
    private sinks: PaneSinks,
    private sizes: StudioSizes = { sky: 256, relight: 144 },
    debounceMs = 120,
    initial?: ParamRecord,
  ) {
    this.state = new ParamPanelState(ranges, initial);
    this.skyPane = new LatestLoader(
      (url) => this.api.fetchPng(url),
      sinks.sky,
      (e) => sinks.error("sky", e),
      debounceMs,
    );
    this.relightPane = new LatestLoader(
      (url) => this.api.fetchPng(url),
      sinks.relight,
      (e) => sinks.error("relight", e),
      debounceMs,
    );
    this.classifyReadout = new LatestLoader(
      () => this.api.classify(this.state.snapshot()),
      sinks.classify,
      (e) => sinks.error("classify", e),
      debounceMs,
    );
  }

  /** Slider/number input changed; returns the clamped value actually used. */
  onParamChange(field: ParamField, value: number): number {
    const used = this.state.set(field, value);
    this.refresh();
    return used;
  }

  onExposureChange(ev: number): void {
    this.state.exposure = ev;
    this.refresh();
  }

  applyPreset(name: string, params: ParamRecord): void {
    this.state.adopt(params, name);
    this.refresh();
  }

  adoptFitted(params: ParamRecord): void {
    this.state.adopt(params, null);
    this.refresh();
  }

  refresh(): void {
    const p = this.state.snapshot();
    this.skyPane.request(this.api.renderUrl(p, this.sizes.sky, this.state.exposure));
    this.relightPane.request(
      this.api.relightUrl(p, this.sizes.relight, this.state.exposure),
    );
    this.classifyReadout.request("classify");
  }

  async settled(): Promise<void> {
    await Promise.all([
      this.skyPane.settled(),
      this.relightPane.settled(),
      this.classifyReadout.settled(),
    ]);
  }
}
