/**
 * Debounced, latest-wins loading for the preview panes and readouts.
 *
 * Each loader keeps at most one in-flight request; rapid slider movement
 * collapses into a single settled request (debounce >= 100 ms keeps the rate
 * at or below 10 requests per second), and stale responses are dropped by
 * sequence number.
 */

export class LatestLoader<T> {
  private seq = 0;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private inFlight: Promise<void> | null = null;
  private pendingUrl: string | null = null;
  requestCount = 0;
  value: T | null = null;

  constructor(
    private fetcher: (url: string) => Promise<T>,
    private onValue: (value: T) => void,
    private onError: (err: unknown) => void = () => {},
    private debounceMs = 120,
  ) {}

  /** Schedule a (re)load; earlier unsettled schedules are superseded. */
  request(url: string): void {
    this.pendingUrl = url;
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = null;
      this.fire();
    }, this.debounceMs);
  }

  private fire(): void {
    if (this.pendingUrl === null) return;
    const url = this.pendingUrl;
    this.pendingUrl = null;
    const mySeq = ++this.seq;
    this.requestCount += 1;
    this.inFlight = this.fetcher(url)
      .then((value) => {
        if (mySeq === this.seq) {
          this.value = value;
          this.onValue(value);
        }
      })
      .catch((err) => {
        if (mySeq === this.seq) this.onError(err);
      })
      .finally(() => {
        if (mySeq === this.seq) this.inFlight = null;
      });
  }

  /** Test/synchronization helper: resolve once nothing is pending. */
  async settled(): Promise<void> {
    while (this.timer !== null || this.inFlight !== null) {
      if (this.timer !== null) {
        clearTimeout(this.timer);
        this.timer = null;
        this.fire();
      }
      const flight = this.inFlight;
      if (flight) await flight;
      await Promise.resolve();
    }
  }
}

export type PaneLoader = LatestLoader<Uint8Array>;
