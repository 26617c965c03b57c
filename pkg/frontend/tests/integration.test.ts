// End-to-end check against a live service; skipped unless one is reachable.
// Start it with: arbilomod serve --geometry bench1 --n 200 --port 8642
// then: ARBILOMOD_SERVICE_URL=http://127.0.0.1:8642 npx vitest run tests/integration.test.ts

import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api";
import { AppStore, formatSignificant } from "../src/state";

const BASE = process.env.ARBILOMOD_SERVICE_URL;

describe.skipIf(!BASE)("live service", () => {
  it("edits geometry 1 into geometry 2, solves, shows reuse savings", async () => {
    const api = new ApiClient(BASE!);
    const store = new AppStore(api);
    const status = await api.status();
    expect(status["revision"]).toBeDefined();

    // load geometry 1 and apply the edit that yields geometry 2
    store.loadGeometry({
      version: 1,
      rectangles: [
        [0.0, 0.0, 0.1, 1.0],
        [0.11, 0.475, 0.89, 0.485],
        [0.1, 0.495, 0.9, 0.505],
        [0.11, 0.515, 0.89, 0.525],
        [0.9, 0.0, 1.0, 1.0],
      ],
      mu_min: 1,
      mu_max: 1e5,
    });
    await api.putGeometry(store.exportDoc());     // commit geometry 1
    store.committed = [...store.rectangles];

    const idx = store.rectangles.findIndex((r) => r.x0 === 0.1 && r.y0 === 0.495);
    store.deleteRectangle(idx);
    store.addRectangle({ x0: 0.11, y0: 0.495, x1: 0.9, y1: 0.505 });
    expect(store.previewAffected()).toEqual([24, 32]);

    store.mu = 1e5;
    store.tol = 1e-2;
    await store.solve();
    expect(store.error).toBeNull();
    const stats = store.displayStats();
    expect(stats).not.toBeNull();
    expect(stats!.trainingsSkipped).toBeGreaterThan(0);   // nonzero reuse savings
    expect(stats!.greedysSkipped).toBeGreaterThan(0);
    // the displayed estimate is the service value at 3 significant digits
    expect(stats!.estimateRelLoc)
      .toBe(formatSignificant(store.lastSolve!.estimate_rel_loc));
    expect(store.lastField!.n).toBeGreaterThan(0);
    expect(store.lastIndicators).toHaveLength(49);
  }, 600_000);
});
