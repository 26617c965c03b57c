// Canvas rendering: geometry editor overlay, field heatmap, indicator map.
// Field colors use a fixed [-1, 1] scale so successive solves are comparable.

import { FieldData } from "./api";
import { DOMAINS, Rect } from "./geometry";

export function fieldColor(value: number): [number, number, number] {
  // blue (-1) .. white (0) .. red (+1)
  const t = Math.min(1, Math.max(-1, value));
  if (t < 0) {
    const s = 1 + t;
    return [Math.round(255 * s), Math.round(255 * s), 255];
  }
  const s = 1 - t;
  return [255, Math.round(255 * s), Math.round(255 * s)];
}

export function drawEditor(
  ctx: CanvasRenderingContext2D,
  size: number,
  rects: Rect[],
  affected: number[],
): void {
  ctx.clearRect(0, 0, size, size);
  ctx.fillStyle = "#ffffff";
  ctx.fillRect(0, 0, size, size);

  // invalidation preview: highlight affected domains
  ctx.fillStyle = "rgba(255, 180, 60, 0.35)";
  const cell = size / DOMAINS;
  for (const dom of affected) {
    const c = dom % DOMAINS;
    const r = Math.floor(dom / DOMAINS);
    ctx.fillRect(c * cell, size - (r + 1) * cell, cell, cell);
  }

  // conductive rectangles (y axis points up in model coordinates)
  ctx.fillStyle = "rgba(40, 40, 40, 0.9)";
  for (const r of rects) {
    ctx.fillRect(r.x0 * size, size - r.y1 * size,
                 (r.x1 - r.x0) * size, (r.y1 - r.y0) * size);
  }

  // domain decomposition overlay
  ctx.strokeStyle = "rgba(100, 100, 220, 0.7)";
  ctx.lineWidth = 1;
  for (let k = 0; k <= DOMAINS; k++) {
    const p = (k * size) / DOMAINS;
    ctx.beginPath();
    ctx.moveTo(p, 0);
    ctx.lineTo(p, size);
    ctx.stroke();
    ctx.beginPath();
    ctx.moveTo(0, p);
    ctx.lineTo(size, p);
    ctx.stroke();
  }
}

export function drawField(
  ctx: CanvasRenderingContext2D,
  size: number,
  field: FieldData,
): void {
  const n = field.n;
  const image = ctx.createImageData(n + 1, n + 1);
  for (let iy = 0; iy <= n; iy++) {
    for (let ix = 0; ix <= n; ix++) {
      const v = field.values[iy * (n + 1) + ix];
      const [r, g, b] = fieldColor(v);
      // flip vertically: canvas row 0 is the top, model row 0 is y = 0
      const off = ((n - iy) * (n + 1) + ix) * 4;
      image.data[off] = r;
      image.data[off + 1] = g;
      image.data[off + 2] = b;
      image.data[off + 3] = 255;
    }
  }
  const tmp = new OffscreenCanvas(n + 1, n + 1);
  const tctx = tmp.getContext("2d") as OffscreenCanvasRenderingContext2D;
  tctx.putImageData(image, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(tmp, 0, 0, size, size);
}

export function drawIndicators(
  ctx: CanvasRenderingContext2D,
  size: number,
  indicators: number[],
): void {
  // 7x7 map over interior coarse vertices; column-fastest ordering matches
  // the service (vertices enumerated x-fastest from the bottom-left)
  const side = DOMAINS - 1;
  ctx.clearRect(0, 0, size, size);
  const peak = Math.max(...indicators, 1e-300);
  const cell = size / side;
  for (let j = 0; j < side; j++) {
    for (let i = 0; i < side; i++) {
      const v = indicators[j * side + i] ?? 0;
      const s = Math.pow(v / peak, 0.5);
      ctx.fillStyle = `rgba(200, 30, 30, ${s.toFixed(3)})`;
      ctx.fillRect(i * cell, size - (j + 1) * cell, cell, cell);
      ctx.strokeStyle = "rgba(0,0,0,0.2)";
      ctx.strokeRect(i * cell, size - (j + 1) * cell, cell, cell);
    }
  }
}
