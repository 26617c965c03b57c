// Rectangle geometry on the 1/1000 snap grid, mirroring the service semantics:
// geometries compare by their raster occupancy, and a change affects every
// domain of the 8x8 decomposition whose closure touches a changed raster cell.

export const GRID = 1000;
export const DOMAINS = 8;

export interface Rect {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

export interface GeometryDoc {
  version: number;
  rectangles: number[][];
  mu_min: number;
  mu_max: number;
}

export function snap(value: number): number {
  const clamped = Math.min(1, Math.max(0, value));
  return Math.round(clamped * GRID) / GRID;
}

export function normalizeRect(r: Rect): Rect | null {
  const x0 = snap(Math.min(r.x0, r.x1));
  const x1 = snap(Math.max(r.x0, r.x1));
  const y0 = snap(Math.min(r.y0, r.y1));
  const y1 = snap(Math.max(r.y0, r.y1));
  if (x1 - x0 < 1 / GRID || y1 - y0 < 1 / GRID) return null;
  return { x0, y0, x1, y1 };
}

export function rectKey(r: Rect): string {
  return [r.x0, r.y0, r.x1, r.y1].join(",");
}

export function hitTest(rects: Rect[], x: number, y: number): number {
  for (let i = rects.length - 1; i >= 0; i--) {
    const r = rects[i];
    if (x >= r.x0 && x <= r.x1 && y >= r.y0 && y <= r.y1) return i;
  }
  return -1;
}

export function raster(rects: Rect[]): Uint8Array {
  const mask = new Uint8Array(GRID * GRID);
  for (const r of rects) {
    const ix0 = Math.round(r.x0 * GRID);
    const ix1 = Math.round(r.x1 * GRID);
    const iy0 = Math.round(r.y0 * GRID);
    const iy1 = Math.round(r.y1 * GRID);
    for (let iy = iy0; iy < iy1; iy++) {
      mask.fill(1, iy * GRID + ix0, iy * GRID + ix1);
    }
  }
  return mask;
}

function stripCandidates(idx: number, w: number): number[] {
  const base = Math.min(Math.floor(idx / w), DOMAINS - 1);
  const out = [base];
  if (idx % w === 0 && idx > 0) out.push(base - 1);
  if ((idx + 1) % w === 0 && idx + 1 < w * DOMAINS) out.push(base + 1);
  return out;
}

/** Domains whose closure intersects the raster difference of two geometries. */
export function affectedDomains(oldRects: Rect[], newRects: Rect[]): number[] {
  const a = raster(oldRects);
  const b = raster(newRects);
  const w = GRID / DOMAINS;
  const affected = new Set<number>();
  for (let iy = 0; iy < GRID; iy++) {
    const rows = stripCandidates(iy, w);
    for (let ix = 0; ix < GRID; ix++) {
      if (a[iy * GRID + ix] === b[iy * GRID + ix]) continue;
      for (const r of rows) {
        for (const c of stripCandidates(ix, w)) {
          affected.add(r * DOMAINS + c);
        }
      }
    }
  }
  return [...affected].sort((p, q) => p - q);
}

export function sameGeometry(a: Rect[], b: Rect[]): boolean {
  const ra = raster(a);
  const rb = raster(b);
  for (let i = 0; i < ra.length; i++) if (ra[i] !== rb[i]) return false;
  return true;
}

export function exportGeometry(rects: Rect[], muMin = 1.0, muMax = 1e5): GeometryDoc {
  const sorted = [...rects].sort((p, q) =>
    p.x0 - q.x0 || p.y0 - q.y0 || p.x1 - q.x1 || p.y1 - q.y1);
  return {
    version: 1,
    rectangles: sorted.map((r) => [r.x0, r.y0, r.x1, r.y1]),
    mu_min: muMin,
    mu_max: muMax,
  };
}

export function importGeometry(doc: GeometryDoc): Rect[] {
  if (doc.version !== 1) throw new Error(`unsupported geometry version ${doc.version}`);
  return doc.rectangles.map(([x0, y0, x1, y1]) => {
    const r = normalizeRect({ x0, y0, x1, y1 });
    if (!r) throw new Error(`degenerate rectangle [${x0},${y0},${x1},${y1}]`);
    return r;
  });
}
