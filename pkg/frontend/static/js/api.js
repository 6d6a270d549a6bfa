/**
 * Typed client for the sky service HTTP API.
 *
 * Every number shown in the UI originates from one of these calls; the
 * client never recomputes sky radiometry locally.
 */
export class ApiError extends Error {
    constructor(status, message) {
        super(message);
        this.status = status;
    }
}
export class ApiClient {
    constructor(base = "", fetchFn = globalThis.fetch?.bind(globalThis)) {
        this.base = base;
        this.fetchFn = fetchFn;
    }
    async getJson(path) {
        const r = await this.fetchFn(this.base + path);
        if (!r.ok)
            throw new ApiError(r.status, await r.text());
        return (await r.json());
    }
    presets() {
        return this.getJson("/api/presets");
    }
    paramQuery(params, extra) {
        const q = new URLSearchParams();
        for (const [k, v] of Object.entries(params))
            q.set(k, String(v));
        for (const [k, v] of Object.entries(extra))
            q.set(k, String(v));
        return q.toString();
    }
    renderUrl(params, size, exposure) {
        return `${this.base}/api/render?${this.paramQuery(params, { size, exposure })}`;
    }
    relightUrl(params, size, exposure) {
        return `${this.base}/api/relight?${this.paramQuery(params, { size, exposure })}`;
    }
    async fetchPng(url) {
        const r = await this.fetchFn(url);
        if (!r.ok)
            throw new ApiError(r.status, await r.text());
        return new Uint8Array(await r.arrayBuffer());
    }
    classify(params, size = 128) {
        return this.getJson(`/api/classify?${this.paramQuery(params, { size })}`);
    }
    async submitFit(file, name = "upload.pfm") {
        const form = new FormData();
        form.append("file", file, name);
        const r = await this.fetchFn(this.base + "/api/fit", { method: "POST", body: form });
        if (!r.ok)
            throw new ApiError(r.status, await r.text());
        const body = (await r.json());
        return body.job_id;
    }
    job(jobId) {
        return this.getJson(`/api/jobs/${jobId}`);
    }
    metrics(jobId, params) {
        const q = new URLSearchParams({ job_id: jobId });
        if (params)
            for (const [k, v] of Object.entries(params))
                q.set(k, String(v));
        return this.getJson(`/api/metrics?${q.toString()}`);
    }
}
