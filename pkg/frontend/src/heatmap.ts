/**
 * Saliency heatmap rendering: a single-hue orange ramp over [0, 1] with
 * caller-controlled overlay opacity. Pure pixel math, no canvas here.
 */

export interface HeatmapOptions {
  /** Overall overlay opacity in [0, 1]; scales per-pixel alpha. */
  opacity: number;
}

/** Single-hue ramp: value 0 -> transparent, value 1 -> saturated orange. */
export function rampColor(value: number): [number, number, number, number] {
  const v = Math.min(1, Math.max(0, value));
  // fixed hue, alpha carries the magnitude
  return [255, 128, 0, Math.round(v * 255)];
}

/**
 * Render a row-major saliency map (values in [0, 1]) to an RGBA buffer
 * suitable for ImageData. Deterministic: same input, same bytes.
 */
export function renderHeatmap(
  saliency: number[][] | Float64Array,
  width: number,
  height: number,
  options: HeatmapOptions,
): Uint8ClampedArray {
  if (options.opacity < 0 || options.opacity > 1) {
    throw new Error(`opacity must be in [0, 1], got ${options.opacity}`);
  }
  const flat: ArrayLike<number> = Array.isArray(saliency)
    ? ([] as number[]).concat(...saliency)
    : saliency;
  if (flat.length !== width * height) {
    throw new Error(`saliency size ${flat.length} != ${width}x${height}`);
  }
  const out = new Uint8ClampedArray(width * height * 4);
  for (let k = 0; k < width * height; k++) {
    const [r, g, b, a] = rampColor(flat[k]!);
    out[4 * k] = r;
    out[4 * k + 1] = g;
    out[4 * k + 2] = b;
    out[4 * k + 3] = Math.round(a * options.opacity);
  }
  return out;
}

/** Min/max legend endpoints for the current map. */
export function saliencyRange(saliency: number[][]): { min: number; max: number } {
  let min = Infinity;
  let max = -Infinity;
  for (const row of saliency) {
    for (const v of row) {
      if (v < min) min = v;
      if (v > max) max = v;
    }
  }
  if (!Number.isFinite(min)) throw new Error("empty saliency map");
  return { min, max };
}

/** Grayscale image (values in [0, 1]) to opaque RGBA for the base layer. */
export function renderGray(
  gray: Float64Array,
  width: number,
  height: number,
): Uint8ClampedArray {
  if (gray.length !== width * height) {
    throw new Error(`image size ${gray.length} != ${width}x${height}`);
  }
  const out = new Uint8ClampedArray(width * height * 4);
  for (let k = 0; k < width * height; k++) {
    const v = Math.round(Math.min(1, Math.max(0, gray[k]!)) * 255);
    out[4 * k] = v;
    out[4 * k + 1] = v;
    out[4 * k + 2] = v;
    out[4 * k + 3] = 255;
  }
  return out;
}

/** Paint-layer overlay colors: red = indispensable, yellow = precluded. */
export function paintColor(value: -1 | 0 | 1): [number, number, number, number] {
  switch (value) {
    case 1:
      return [220, 38, 38, 150]; // red
    case 0:
      return [234, 179, 8, 150]; // yellow
    default:
      return [0, 0, 0, 0]; // undecided: transparent
  }
}
