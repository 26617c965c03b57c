// Typed client for the session service; fetch is injectable for tests.

import { GeometryDoc } from "./geometry";

export interface Invalidations {
  trainings: number;
  faces: number;
  greedys: number;
  vertices: number;
}

export interface GeometryResponse {
  revision: number;
  added: number[][];
  removed: number[][];
  affected_domains: number[];
  invalidations: Invalidations;
}

export interface SolveResponse {
  mu: number;
  estimate_rel: number;
  estimate_rel_loc: number;
  residual_norm: number;
  reduced_dim: number;
  iterations: number;
  reuse_stats: {
    trainings_run: number;
    trainings_skipped: number;
    greedys_run: number;
    greedys_skipped: number;
    last_change: Record<string, unknown>;
  };
}

export interface FieldData {
  n: number;
  min: number;
  max: number;
  values: Float64Array; // (n+1) x (n+1) row major, row = y index
}

export class ServiceBusyError extends Error {}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchFn: typeof fetch = fetch,
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (resp.status === 409) throw new ServiceBusyError("solve in progress");
    if (!resp.ok) {
      const text = await resp.text();
      throw new Error(`${init?.method ?? "GET"} ${path} failed (${resp.status}): ${text}`);
    }
    return resp;
  }

  async putGeometry(doc: GeometryDoc): Promise<GeometryResponse> {
    const resp = await this.request("/geometry", {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(doc),
    });
    return (await resp.json()) as GeometryResponse;
  }

  async solve(mu: number, tol: number): Promise<SolveResponse> {
    const resp = await this.request("/solve", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ mu, tol }),
    });
    return (await resp.json()) as SolveResponse;
  }

  async field(mu: number): Promise<FieldData> {
    const resp = await this.request(`/field?mu=${encodeURIComponent(mu)}`);
    return parseFieldPayload(await resp.arrayBuffer());
  }

  async indicators(): Promise<{ mu: number | null; indicators: number[] }> {
    const resp = await this.request("/indicators");
    return (await resp.json()) as { mu: number | null; indicators: number[] };
  }

  async status(): Promise<Record<string, unknown>> {
    const resp = await this.request("/status");
    return (await resp.json()) as Record<string, unknown>;
  }
}

/** Binary layout: "ALF1" magic, uint32 n, float32 min, float32 max, f64 grid. */
export function parseFieldPayload(buffer: ArrayBuffer): FieldData {
  const view = new DataView(buffer);
  const magic = new TextDecoder().decode(new Uint8Array(buffer, 0, 4));
  if (magic !== "ALF1") throw new Error(`bad field payload magic '${magic}'`);
  const n = view.getUint32(4, true);
  const min = view.getFloat32(8, true);
  const max = view.getFloat32(12, true);
  const count = (n + 1) * (n + 1);
  if (buffer.byteLength !== 16 + 8 * count) {
    throw new Error(`field payload size mismatch: ${buffer.byteLength}`);
  }
  return { n, min, max, values: new Float64Array(buffer.slice(16)) };
}
