import { describe, expect, it } from "vitest";

import { LatestLoader } from "../src/previews.js";

function deferred<T>() {
  let resolve!: (v: T) => void;
  let reject!: (e: unknown) => void;
  const promise = new Promise<T>((res, rej) => {
    resolve = res;
    reject = rej;
  });
  return { promise, resolve, reject };
}

describe("LatestLoader", () => {
  it("collapses a burst of requests into one settled fetch", async () => {
    const seen: string[] = [];
    const loader = new LatestLoader<string>(
      async (url) => {
        seen.push(url);
        return `payload:${url}`;
      },
      () => {},
      () => {},
      5,
    );
    for (let i = 0; i < 25; i++) loader.request(`u${i}`);
    await loader.settled();
    expect(seen).toEqual(["u24"]);
    expect(loader.requestCount).toBe(1);
    expect(loader.value).toBe("payload:u24");
  });

  it("drops stale responses when a newer request lands first", async () => {
    const gates = new Map<string, ReturnType<typeof deferred<string>>>();
    const delivered: string[] = [];
    const loader = new LatestLoader<string>(
      (url) => {
        const d = deferred<string>();
        gates.set(url, d);
        return d.promise;
      },
      (v) => delivered.push(v),
      () => {},
      0,
    );
    loader.request("old");
    await new Promise((r) => setTimeout(r, 1));
    loader.request("new");
    await new Promise((r) => setTimeout(r, 1));
    gates.get("new")!.resolve("fresh");
    await new Promise((r) => setTimeout(r, 1));
    gates.get("old")!.resolve("stale");
    await new Promise((r) => setTimeout(r, 1));
    expect(delivered).toEqual(["fresh"]);
    expect(loader.value).toBe("fresh");
  });

  it("routes failures to the error sink", async () => {
    const errs: unknown[] = [];
    const loader = new LatestLoader<string>(
      async () => {
        throw new Error("boom");
      },
      () => {},
      (e) => errs.push(e),
      0,
    );
    loader.request("x");
    await loader.settled();
    expect(errs).toHaveLength(1);
    expect(loader.value).toBeNull();
  });
});
