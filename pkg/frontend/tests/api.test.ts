import { describe, expect, it } from "vitest";

import { ApiClient, ServiceBusyError, parseFieldPayload } from "../src/api";

function fieldBuffer(n: number, fill: (ix: number, iy: number) => number): ArrayBuffer {
  const count = (n + 1) * (n + 1);
  const buf = new ArrayBuffer(16 + 8 * count);
  const bytes = new Uint8Array(buf);
  bytes.set(new TextEncoder().encode("ALF1"), 0);
  const view = new DataView(buf);
  view.setUint32(4, n, true);
  const values = new Float64Array(buf, 16);
  let lo = Infinity;
  let hi = -Infinity;
  for (let iy = 0; iy <= n; iy++) {
    for (let ix = 0; ix <= n; ix++) {
      const v = fill(ix, iy);
      values[iy * (n + 1) + ix] = v;
      lo = Math.min(lo, v);
      hi = Math.max(hi, v);
    }
  }
  view.setFloat32(8, lo, true);
  view.setFloat32(12, hi, true);
  return buf;
}

describe("field payload parsing", () => {
  it("decodes header and row-major grid", () => {
    const buf = fieldBuffer(4, (ix) => 1 - (2 * ix) / 4);
    const field = parseFieldPayload(buf);
    expect(field.n).toBe(4);
    expect(field.min).toBeCloseTo(-1);
    expect(field.max).toBeCloseTo(1);
    expect(field.values[0]).toBeCloseTo(1);       // x = 0
    expect(field.values[4]).toBeCloseTo(-1);      // x = 1
    expect(field.values.length).toBe(25);
  });

  it("rejects bad magic and truncated payloads", () => {
    const buf = fieldBuffer(2, () => 0);
    new Uint8Array(buf)[0] = 88;
    expect(() => parseFieldPayload(buf)).toThrow(/magic/);
    const good = fieldBuffer(2, () => 0);
    expect(() => parseFieldPayload(good.slice(0, 30))).toThrow(/size/);
  });
});

function mockFetch(routes: Record<string, (init?: RequestInit) => Response>): typeof fetch {
  return (async (url: RequestInfo | URL, init?: RequestInit) => {
    const path = String(url).replace("http://test", "");
    const handler = routes[path.split("?")[0]];
    if (!handler) return new Response("not found", { status: 404 });
    return handler(init);
  }) as typeof fetch;
}

describe("api client", () => {
  it("puts geometry and decodes the change summary", async () => {
    const api = new ApiClient("http://test", mockFetch({
      "/geometry": (init) => {
        const body = JSON.parse(String(init?.body));
        expect(body.version).toBe(1);
        return Response.json({
          revision: 2,
          added: [],
          removed: [[0.1, 0.495, 0.11, 0.505]],
          affected_domains: [24, 32],
          invalidations: { trainings: 5, faces: 5, greedys: 8, vertices: 3 },
        });
      },
    }));
    const resp = await api.putGeometry({ version: 1, rectangles: [], mu_min: 1, mu_max: 1e5 });
    expect(resp.invalidations.trainings).toBe(5);
    expect(resp.affected_domains).toEqual([24, 32]);
  });

  it("maps 409 to ServiceBusyError", async () => {
    const api = new ApiClient("http://test", mockFetch({
      "/solve": () => new Response("busy", { status: 409 }),
    }));
    await expect(api.solve(10, 1e-2)).rejects.toBeInstanceOf(ServiceBusyError);
  });

  it("raises on other failures with detail", async () => {
    const api = new ApiClient("http://test", mockFetch({
      "/solve": () => new Response("bad mu", { status: 400 }),
    }));
    await expect(api.solve(0, 1e-2)).rejects.toThrow(/400/);
  });
});
