// DOM wiring for the companion UI: editor canvas, parameter panel, results.

import { ApiClient } from "./api";
import { Rect, hitTest, normalizeRect, snap } from "./geometry";
import { drawEditor, drawField, drawIndicators } from "./render";
import { AppStore, formatSignificant, muToSlider, sliderToMu } from "./state";

const SERVICE_URL = (window as unknown as { SERVICE_URL?: string }).SERVICE_URL
  ?? "http://127.0.0.1:8642";
const CANVAS = 512;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function main(): void {
  const store = new AppStore(new ApiClient(SERVICE_URL));
  const editor = el<HTMLCanvasElement>("editor");
  const fieldCanvas = el<HTMLCanvasElement>("field");
  const indicatorCanvas = el<HTMLCanvasElement>("indicators");
  const muSlider = el<HTMLInputElement>("mu");
  const muLabel = el<HTMLSpanElement>("mu-label");
  const tolSelect = el<HTMLSelectElement>("tol");
  const solveButton = el<HTMLButtonElement>("solve");
  const statsBox = el<HTMLDivElement>("stats");
  const exportBox = el<HTMLTextAreaElement>("geometry-json");

  editor.width = editor.height = CANVAS;
  fieldCanvas.width = fieldCanvas.height = CANVAS;
  indicatorCanvas.width = indicatorCanvas.height = CANVAS / 2;

  let dragStart: { x: number; y: number } | null = null;
  let dragCurrent: Rect | null = null;

  const toModel = (ev: MouseEvent): { x: number; y: number } => {
    const box = editor.getBoundingClientRect();
    return {
      x: snap((ev.clientX - box.left) / box.width),
      y: snap(1 - (ev.clientY - box.top) / box.height),
    };
  };

  editor.addEventListener("mousedown", (ev) => {
    dragStart = toModel(ev);
  });
  editor.addEventListener("mousemove", (ev) => {
    if (!dragStart) return;
    const p = toModel(ev);
    dragCurrent = normalizeRect({ x0: dragStart.x, y0: dragStart.y, x1: p.x, y1: p.y });
    render();
  });
  editor.addEventListener("mouseup", (ev) => {
    if (!dragStart) return;
    const p = toModel(ev);
    const rect = normalizeRect({ x0: dragStart.x, y0: dragStart.y, x1: p.x, y1: p.y });
    if (rect) {
      store.addRectangle(rect);
    } else {
      const hit = hitTest(store.rectangles, p.x, p.y);
      if (hit >= 0) store.deleteRectangle(hit);   // click deletes
    }
    dragStart = null;
    dragCurrent = null;
  });

  muSlider.addEventListener("input", () => {
    store.mu = sliderToMu(Number(muSlider.value));
    render();
  });
  tolSelect.addEventListener("change", () => {
    store.tol = Number(tolSelect.value);
  });
  solveButton.addEventListener("click", () => {
    void store.solve();
  });

  const render = (): void => {
    const ctx = editor.getContext("2d");
    if (ctx) {
      const rects = dragCurrent ? [...store.rectangles, dragCurrent] : store.rectangles;
      drawEditor(ctx, CANVAS, rects, store.previewAffected());
    }
    muLabel.textContent = `mu = ${formatSignificant(store.mu)}`;
    solveButton.disabled = !store.canSolve;
    solveButton.textContent = store.busy ? "solving..." : "solve";
    exportBox.value = JSON.stringify(store.exportDoc());

    const stats = store.displayStats();
    if (stats) {
      statsBox.innerHTML = [
        `relative estimate (localized): <b>${stats.estimateRelLoc}</b>`,
        `enrichment iterations: <b>${stats.iterations}</b>`,
        `reduced dimension: <b>${stats.reducedDim}</b>`,
        `reuse savings: <b>${stats.trainingsSkipped}</b> trainings, ` +
        `<b>${stats.greedysSkipped}</b> greedys skipped`,
      ].join("<br>");
    }
    if (store.error) {
      statsBox.innerHTML = `<span style="color:#b00">${store.error}</span>`;
    }
    const fctx = fieldCanvas.getContext("2d");
    if (fctx && store.lastField) drawField(fctx, CANVAS, store.lastField);
    const ictx = indicatorCanvas.getContext("2d");
    if (ictx && store.lastIndicators.length) {
      drawIndicators(ictx, CANVAS / 2, store.lastIndicators);
    }
  };

  store.subscribe(render);
  muSlider.value = String(muToSlider(store.mu));

  void (async () => {
    const api = new ApiClient(SERVICE_URL);
    try {
      const status = await api.status();
      statsBox.textContent = `connected, revision ${status["revision"]}`;
    } catch (err) {
      statsBox.textContent = `service unreachable at ${SERVICE_URL}`;
    }
    render();
  })();
}

main();
