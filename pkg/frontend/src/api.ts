/**
 * Typed client for the sky service HTTP API.
 *
 * Every number shown in the UI originates from one of these calls; the
 * client never recomputes sky radiometry locally.
 */

export type ParamRecord = Record<string, number>;
export type Ranges = Record<string, [number, number]>;

export interface PresetsPayload {
  presets: Record<string, ParamRecord>;
  ranges: Ranges;
}

export interface JobRecord {
  job_id: string;
  kind: string;
  state: "queued" | "running" | "done" | "failed";
  submitted_at: number;
  result: (ParamRecord & { id: string }) | null;
  error: string | null;
}

export interface MetricsRecord {
  rmse_texture: number;
  si_rmse_texture: number;
  rmse_render: number;
  si_rmse_render: number;
}

export interface ClassifyRecord {
  coverage: number;
  category: string;
  sun_zenith_deg: number;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private base: string = "",
    private fetchFn: typeof fetch = globalThis.fetch?.bind(globalThis),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const r = await this.fetchFn(this.base + path);
    if (!r.ok) throw new ApiError(r.status, await r.text());
    return (await r.json()) as T;
  }

  presets(): Promise<PresetsPayload> {
    return this.getJson<PresetsPayload>("/api/presets");
  }

  private paramQuery(params: ParamRecord, extra: Record<string, number>): string {
    const q = new URLSearchParams();
    for (const [k, v] of Object.entries(params)) q.set(k, String(v));
    for (const [k, v] of Object.entries(extra)) q.set(k, String(v));
    return q.toString();
  }

  renderUrl(params: ParamRecord, size: number, exposure: number): string {
    return `${this.base}/api/render?${this.paramQuery(params, { size, exposure })}`;
  }

  relightUrl(params: ParamRecord, size: number, exposure: number): string {
    return `${this.base}/api/relight?${this.paramQuery(params, { size, exposure })}`;
  }

  async fetchPng(url: string): Promise<Uint8Array> {
    const r = await this.fetchFn(url);
    if (!r.ok) throw new ApiError(r.status, await r.text());
    return new Uint8Array(await r.arrayBuffer());
  }

  classify(params: ParamRecord, size = 128): Promise<ClassifyRecord> {
    return this.getJson<ClassifyRecord>(
      `/api/classify?${this.paramQuery(params, { size })}`,
    );
  }

  async submitFit(file: Blob, name = "upload.pfm"): Promise<string> {
    const form = new FormData();
    form.append("file", file, name);
    const r = await this.fetchFn(this.base + "/api/fit", { method: "POST", body: form });
    if (!r.ok) throw new ApiError(r.status, await r.text());
    const body = (await r.json()) as { job_id: string };
    return body.job_id;
  }

  job(jobId: string): Promise<JobRecord> {
    return this.getJson<JobRecord>(`/api/jobs/${jobId}`);
  }

  metrics(jobId: string, params?: ParamRecord): Promise<MetricsRecord> {
    const q = new URLSearchParams({ job_id: jobId });
    if (params) for (const [k, v] of Object.entries(params)) q.set(k, String(v));
    return this.getJson<MetricsRecord>(`/api/metrics?${q.toString()}`);
  }
}
