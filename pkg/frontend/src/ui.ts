/**
 * DOM wiring for the prompt studio: canvas painting, overlay composition,
 * submission, and result rendering. Pure logic lives in the sibling
 * modules; this file only connects it to the page.
 */

import { ApiClient, ApiError, RequestCancelled, PredictResponse } from "./api.js";
import { probabilityBars } from "./bars.js";
import { paintColor, renderGray, renderHeatmap, saliencyRange } from "./heatmap.js";
import { base64ToBytes, parsePnm, toUnitGray } from "./netpbm.js";
import { BrushMode, PaintLayer } from "./prompt.js";

const SCALE = 12; // screen pixels per image pixel
const REQUEST_SEED = 0; // fixed so re-renders are stable

interface StudioState {
  image: Float64Array | null;
  imageRows: number[][] | null;
  width: number;
  height: number;
  layer: PaintLayer | null;
  brush: BrushMode;
  radius: number;
  opacity: number;
  lastResponse: PredictResponse | null;
  baseline: PredictResponse | null;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function startStudio(baseUrl: string): void {
  const api = new ApiClient(baseUrl);
  const state: StudioState = {
    image: null, imageRows: null, width: 0, height: 0,
    layer: null, brush: "indispensable", radius: 2, opacity: 0.6,
    lastResponse: null, baseline: null,
  };

  const canvas = el<HTMLCanvasElement>("studio-canvas");
  const maybeCtx = canvas.getContext("2d");
  if (!maybeCtx) throw new Error("2d canvas unsupported");
  const ctx = maybeCtx;
  const banner = el<HTMLDivElement>("banner");

  function showBanner(message: string): void {
    banner.textContent = message;
    banner.hidden = false;
  }

  function clearBanner(): void {
    banner.hidden = true;
  }

  function redraw(): void {
    if (!state.image || !state.layer) return;
    const { width, height } = state;
    const off = new OffscreenCanvas(width, height);
    const octx = off.getContext("2d")!;
    octx.putImageData(
      new ImageData(new Uint8ClampedArray(renderGray(state.image, width, height)),
                    width, height), 0, 0);

    // saliency under the paint marks, so the user's strokes stay visible
    const sal = state.lastResponse?.saliency;
    if (sal) {
      const rgba = renderHeatmap(sal.array, width, height, { opacity: state.opacity });
      blend(octx, rgba, width, height);
    }
    const paint = new Uint8ClampedArray(width * height * 4);
    for (let y = 0; y < height; y++) {
      for (let x = 0; x < width; x++) {
        const [r, g, b, a] = paintColor(state.layer.valueAt(x, y));
        const k = 4 * (y * width + x);
        paint[k] = r; paint[k + 1] = g; paint[k + 2] = b; paint[k + 3] = a;
      }
    }
    blend(octx, paint, width, height);

    canvas.width = width * SCALE;
    canvas.height = height * SCALE;
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
  }

  function blend(target: OffscreenCanvasRenderingContext2D, rgba: Uint8ClampedArray,
                 width: number, height: number): void {
    const tmp = new OffscreenCanvas(width, height);
    tmp.getContext("2d")!.putImageData(
      new ImageData(new Uint8ClampedArray(rgba), width, height), 0, 0);
    target.drawImage(tmp, 0, 0);
  }

  function loadImageBytes(bytes: Uint8Array): void {
    const img = parsePnm(bytes);
    state.image = toUnitGray(img);
    state.width = img.width;
    state.height = img.height;
    state.imageRows = [];
    for (let y = 0; y < img.height; y++) {
      const row: number[] = [];
      for (let x = 0; x < img.width; x++) row.push(state.image[y * img.width + x]!);
      state.imageRows.push(row);
    }
    state.layer = new PaintLayer(img.width, img.height);
    state.lastResponse = null;
    state.baseline = null;
    clearBanner();
    redraw();
  }

  // ---- painting ----

  let painting = false;
  canvas.addEventListener("pointerdown", (ev) => {
    if (!state.layer) return;
    painting = true;
    state.layer.pushUndo();
    paintAt(ev);
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (painting) paintAt(ev);
  });
  window.addEventListener("pointerup", () => {
    painting = false;
  });

  function paintAt(ev: PointerEvent): void {
    if (!state.layer) return;
    const rect = canvas.getBoundingClientRect();
    const x = ((ev.clientX - rect.left) / rect.width) * state.width;
    const y = ((ev.clientY - rect.top) / rect.height) * state.height;
    state.layer.stamp(x, y, state.radius, state.brush);
    redraw();
  }

  // ---- controls ----

  for (const mode of ["indispensable", "precluded", "eraser"] as BrushMode[]) {
    el<HTMLButtonElement>(`brush-${mode}`).addEventListener("click", () => {
      state.brush = mode;
      for (const m of ["indispensable", "precluded", "eraser"]) {
        el(`brush-${m}`).classList.toggle("active", m === mode);
      }
    });
  }
  el<HTMLInputElement>("brush-radius").addEventListener("input", (ev) => {
    state.radius = Number((ev.target as HTMLInputElement).value);
  });
  el<HTMLInputElement>("overlay-opacity").addEventListener("input", (ev) => {
    state.opacity = Number((ev.target as HTMLInputElement).value);
    redraw();
  });
  el<HTMLButtonElement>("undo").addEventListener("click", () => {
    if (state.layer?.undo()) redraw();
  });
  el<HTMLButtonElement>("clear").addEventListener("click", () => {
    state.layer?.clear();
    redraw();
  });

  el<HTMLInputElement>("file-input").addEventListener("change", async (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (!file) return;
    try {
      loadImageBytes(new Uint8Array(await file.arrayBuffer()));
    } catch (err) {
      showBanner(`could not load image: ${String(err)}`);
    }
  });

  el<HTMLButtonElement>("load-sample").addEventListener("click", async () => {
    try {
      const listing = await api.datasetListing();
      const test = listing["test"] ?? [];
      if (test.length === 0) throw new Error("server exposes no test samples");
      const pick = test[Math.floor(Math.random() * test.length)]!;
      loadImageBytes(base64ToBytes(await api.datasetImage("test", pick)));
    } catch (err) {
      showBanner(err instanceof ApiError
        ? `sample loading failed (${err.status}): ${err.message}`
        : `sample loading failed: ${String(err)}`);
    }
  });

  // ---- submission ----

  el<HTMLButtonElement>("submit").addEventListener("click", async () => {
    if (!state.imageRows || !state.layer) {
      showBanner("load an image first");
      return;
    }
    clearBanner();
    try {
      // non-prompted baseline first, then the prompted request with saliency
      state.baseline = await api.predict({
        image: state.imageRows,
        options: { seed: REQUEST_SEED },
      });
      state.lastResponse = await api.predict({
        image: state.imageRows,
        prompt: state.layer.export(),
        options: { return_saliency: true, seed: REQUEST_SEED },
      });
      renderResults();
      redraw();
    } catch (err) {
      if (err instanceof RequestCancelled) return; // superseded, keep canvas
      if (err instanceof ApiError) {
        const diag = err.diagnosticId ? ` [diagnostic ${err.diagnosticId}]` : "";
        showBanner(`request failed (${err.status || "network"}): ${err.message}${diag}`);
      } else {
        showBanner(`request failed: ${String(err)}`);
      }
    }
  });

  function renderResults(): void {
    const blocks: Array<[string, PredictResponse | null]> = [
      ["prompted", state.lastResponse],
      ["non-prompted", state.baseline],
    ];
    for (const [name, res] of blocks) {
      const target = el<HTMLDivElement>(`bars-${name}`);
      target.innerHTML = "";
      if (!res?.probabilities) continue;
      for (const row of probabilityBars(res.probabilities)) {
        const line = document.createElement("div");
        line.className = "bar-row" + (row.isArgmax ? " argmax" : "");
        const fill = document.createElement("span");
        fill.className = "bar-fill";
        fill.style.width = `${row.widthFraction * 100}%`;
        const label = document.createElement("span");
        label.textContent = `class ${row.classIndex}: ${row.percentText}`;
        line.append(fill, label);
        target.append(line);
      }
    }
    const sal = state.lastResponse?.saliency;
    if (sal) {
      const { min, max } = saliencyRange(sal.array);
      el("legend").textContent = `saliency ${min.toFixed(3)} – ${max.toFixed(3)}`;
    }
  }

  // initial health check
  api.health()
    .then((h) => {
      if (!h.checkpoint_id) showBanner("service is up but no checkpoint is loaded");
    })
    .catch(() => showBanner("inference service unreachable"));
}
