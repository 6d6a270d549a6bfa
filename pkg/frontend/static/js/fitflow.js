/**
 * Upload-and-fit state machine: submit an HDR capture, poll the job at 1 Hz,
 * and surface the fitted parameters (or a readable failure) to the panel.
 */
export class FitFlow {
    constructor(api, pollMs = 1000, sleep = (ms) => new Promise((r) => setTimeout(r, ms))) {
        this.api = api;
        this.pollMs = pollMs;
        this.sleep = sleep;
        this.phase = "idle";
        this.jobId = null;
        this.error = null;
    }
    async run(file, name) {
        this.phase = "uploading";
        this.error = null;
        try {
            this.jobId = await this.api.submitFit(file, name);
        }
        catch (err) {
            this.phase = "failed";
            this.error = String(err);
            return this.outcome(null, false);
        }
        this.phase = "polling";
        for (;;) {
            let rec;
            try {
                rec = await this.api.job(this.jobId);
            }
            catch (err) {
                this.phase = "failed";
                this.error = String(err);
                return this.outcome(null, false);
            }
            if (rec.state === "done" && rec.result) {
                const flags = rec.result.flags;
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
    outcome(params, rejected) {
        return {
            phase: this.phase,
            jobId: this.jobId,
            params,
            error: this.error,
            rejected,
        };
    }
}
