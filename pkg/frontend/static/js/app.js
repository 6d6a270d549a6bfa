/**
 * Studio controller: glues the slider state to the preview panes.
 *
 * Pure logic, no DOM: the host passes sinks that receive PNG bytes and
 * classification readouts.  One settled request per pane per change burst.
 */
import { LatestLoader } from "./previews.js";
import { ParamPanelState } from "./state.js";
export class StudioController {
    constructor(api, ranges, sinks, sizes = { sky: 256, relight: 144 }, debounceMs = 120, initial) {
        this.api = api;
        this.sinks = sinks;
        this.sizes = sizes;
        this.state = new ParamPanelState(ranges, initial);
        this.skyPane = new LatestLoader((url) => this.api.fetchPng(url), sinks.sky, (e) => sinks.error("sky", e), debounceMs);
        this.relightPane = new LatestLoader((url) => this.api.fetchPng(url), sinks.relight, (e) => sinks.error("relight", e), debounceMs);
        this.classifyReadout = new LatestLoader(() => this.api.classify(this.state.snapshot()), sinks.classify, (e) => sinks.error("classify", e), debounceMs);
    }
    /** Slider/number input changed; returns the clamped value actually used. */
    onParamChange(field, value) {
        const used = this.state.set(field, value);
        this.refresh();
        return used;
    }
    onExposureChange(ev) {
        this.state.exposure = ev;
        this.refresh();
    }
    applyPreset(name, params) {
        this.state.adopt(params, name);
        this.refresh();
    }
    adoptFitted(params) {
        this.state.adopt(params, null);
        this.refresh();
    }
    refresh() {
        const p = this.state.snapshot();
        this.skyPane.request(this.api.renderUrl(p, this.sizes.sky, this.state.exposure));
        this.relightPane.request(this.api.relightUrl(p, this.sizes.relight, this.state.exposure));
        this.classifyReadout.request("classify");
    }
    async settled() {
        await Promise.all([
            this.skyPane.settled(),
            this.relightPane.settled(),
            this.classifyReadout.settled(),
        ]);
    }
}
