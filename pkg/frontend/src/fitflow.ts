/**
 * Upload-and-fit state machine: submit an HDR capture, poll the job at 1 Hz,
 * and surface the fitted parameters (or a readable failure) to the panel.
 */

import type { ApiClient, JobRecord, ParamRecord } from "./api.js";

export type FitPhase = "idle" | "uploading" | "polling" | "done" | "failed";

export interface FitOutcome {
  phase: FitPhase;
  jobId: string | null;
  params: ParamRecord | null;
  error: string | null;
  rejected: boolean;
}

export class FitFlow {
  phase: FitPhase = "idle";
  jobId: string | null = null;
  error: string | null = null;

  constructor(
    private api: ApiClient,
    private pollMs = 1000,
    private sleep: (ms: number) => Promise<void> = (ms) =>
      new Promise((r) => setTimeout(r, ms)),
  ) {}

  async run(file: Blob, name?: string): Promise<FitOutcome> {
    this.phase = "uploading";
    this.error = null;
    try {
      this.jobId = await this.api.submitFit(file, name);
    } catch (err) {
      this.phase = "failed";
      this.error = String(err);
      return this.outcome(null, false);
    }
    this.phase = "polling";
    for (;;) {
      let rec: JobRecord;
      try {
        rec = await this.api.job(this.jobId);
      } catch (err) {
        this.phase = "failed";
        this.error = String(err);
        return this.outcome(null, false);
      }
      if (rec.state === "done" && rec.result) {
        const flags = (rec.result as unknown as { flags?: Record<string, boolean> }).flags;
        const rejected = Boolean(flags && flags["rejected_zenith"]);
        this.phase = rejected ? "failed" : "done";
        if (rejected) {
          this.error = "rejected: sun is beyond 80 degrees of zenith";
          return this.outcome(rec.result, true);
        }
        return this.outcome(rec.result, false);
      }
      if (rec.state === "failed") {
        this.phase = "failed";
        this.error = rec.error ?? "fit failed";
        return this.outcome(null, false);
      }
      await this.sleep(this.pollMs);
    }
  }

  private outcome(params: ParamRecord | null, rejected: boolean): FitOutcome {
    return {
      phase: this.phase,
      jobId: this.jobId,
      params,
      error: this.error,
      rejected,
    };
  }
}
