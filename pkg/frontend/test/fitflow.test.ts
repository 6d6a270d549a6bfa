import { describe, expect, it } from "vitest";

import type { ApiClient, JobRecord } from "../src/api.js";
import { FitFlow } from "../src/fitflow.js";

function jobApi(states: Array<Partial<JobRecord>>, submit = async () => "job-1") {
  let i = 0;
  const api = {
    submitFit: submit,
    job: async (): Promise<JobRecord> => {
      const rec = states[Math.min(i, states.length - 1)];
      i += 1;
      return {
        job_id: "job-1",
        kind: "fit",
        state: "queued",
        submitted_at: 0,
        result: null,
        error: null,
        ...rec,
      } as JobRecord;
    },
  };
  return api as unknown as ApiClient;
}

const noSleep = async () => {};

describe("FitFlow", () => {
  it("polls until done and returns the fitted parameters", async () => {
    const fitted = { id: "job-1", kappa: 0.4, beta: 12, flags: { rejected_zenith: false } };
    const api = jobApi([
      { state: "queued" },
      { state: "running" },
      { state: "done", result: fitted as never },
    ]);
    const flow = new FitFlow(api, 0, noSleep);
    const out = await flow.run(new Blob(["x"]));
    expect(out.phase).toBe("done");
    expect(out.params).toMatchObject({ kappa: 0.4, beta: 12 });
    expect(out.rejected).toBe(false);
  });

  it("reports a zenith rejection distinctly", async () => {
    const rejected = { id: "job-1", kappa: 0.5, flags: { rejected_zenith: true } };
    const api = jobApi([{ state: "done", result: rejected as never }]);
    const flow = new FitFlow(api, 0, noSleep);
    const out = await flow.run(new Blob(["x"]));
    expect(out.rejected).toBe(true);
    expect(out.phase).toBe("failed");
    expect(out.error).toContain("80");
  });

  it("surfaces job failures with their error text", async () => {
    const api = jobApi([{ state: "failed", error: "bad HDR header" }]);
    const flow = new FitFlow(api, 0, noSleep);
    const out = await flow.run(new Blob(["x"]));
    expect(out.phase).toBe("failed");
    expect(out.error).toBe("bad HDR header");
    expect(out.params).toBeNull();
  });

  it("upload failures never reach polling", async () => {
    const api = jobApi([], async () => {
      throw new Error("413 payload too large");
    });
    const flow = new FitFlow(api, 0, noSleep);
    const out = await flow.run(new Blob(["x"]));
    expect(out.phase).toBe("failed");
    expect(out.jobId).toBeNull();
    expect(out.error).toContain("413");
  });
});
