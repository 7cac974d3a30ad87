/**
 * Paint-layer model for trinary attention prompts.
 *
 * Every pixel is one of: +1 (indispensable), 0 (precluded), -1 (undecided).
 * An untouched canvas is all undecided; the eraser returns pixels to
 * undecided. The layer is pure data — rendering lives in ui.ts.
 */

export type PromptValue = -1 | 0 | 1;
export type BrushMode = "indispensable" | "precluded" | "eraser";

export const BRUSH_VALUE: Record<BrushMode, PromptValue> = {
  indispensable: 1,
  precluded: 0,
  eraser: -1,
};

const MAX_UNDO = 100;

export class PaintLayer {
  readonly width: number;
  readonly height: number;
  private values: Int8Array;
  private undoStack: Int8Array[] = [];

  constructor(width: number, height: number) {
    if (!Number.isInteger(width) || !Number.isInteger(height) || width < 1 || height < 1) {
      throw new Error(`invalid paint layer size ${width}x${height}`);
    }
    this.width = width;
    this.height = height;
    this.values = new Int8Array(width * height).fill(-1);
  }

  valueAt(x: number, y: number): PromptValue {
    if (x < 0 || y < 0 || x >= this.width || y >= this.height) {
      throw new Error(`pixel (${x}, ${y}) outside ${this.width}x${this.height}`);
    }
    return this.values[y * this.width + x] as PromptValue;
  }

  /** Number of pixels currently holding `value`. */
  count(value: PromptValue): number {
    let n = 0;
    for (const v of this.values) if (v === value) n++;
    return n;
  }

  /**
   * Apply one circular brush stamp. Returns the number of pixels changed.
   * Call pushUndo() once per stroke (pointer-down), not per stamp.
   */
  stamp(cx: number, cy: number, radius: number, mode: BrushMode): number {
    const value = BRUSH_VALUE[mode];
    const r2 = radius * radius;
    let changed = 0;
    const x0 = Math.max(0, Math.floor(cx - radius));
    const x1 = Math.min(this.width - 1, Math.ceil(cx + radius));
    const y0 = Math.max(0, Math.floor(cy - radius));
    const y1 = Math.min(this.height - 1, Math.ceil(cy + radius));
    for (let y = y0; y <= y1; y++) {
      for (let x = x0; x <= x1; x++) {
        const dx = x - cx;
        const dy = y - cy;
        if (dx * dx + dy * dy <= r2) {
          const i = y * this.width + x;
          if (this.values[i] !== value) {
            this.values[i] = value;
            changed++;
          }
        }
      }
    }
    return changed;
  }

  pushUndo(): void {
    this.undoStack.push(this.values.slice());
    if (this.undoStack.length > MAX_UNDO) this.undoStack.shift();
  }

  /** Restore the layer to the last pushUndo() snapshot. */
  undo(): boolean {
    const prev = this.undoStack.pop();
    if (!prev) return false;
    this.values = prev;
    return true;
  }

  get undoDepth(): number {
    return this.undoStack.length;
  }

  clear(): void {
    this.pushUndo();
    this.values.fill(-1);
  }

  /** Wire form for the HTTP API: row-major nested arrays of {-1, 0, 1}. */
  export(): PromptValue[][] {
    const rows: PromptValue[][] = [];
    for (let y = 0; y < this.height; y++) {
      const row: PromptValue[] = [];
      for (let x = 0; x < this.width; x++) {
        row.push(this.values[y * this.width + x] as PromptValue);
      }
      rows.push(row);
    }
    return rows;
  }

  /** Rebuild a layer from the wire form; inverse of export(). */
  static import(rows: number[][]): PaintLayer {
    const height = rows.length;
    const width = height > 0 ? rows[0]!.length : 0;
    const layer = new PaintLayer(width, height);
    for (let y = 0; y < height; y++) {
      const row = rows[y]!;
      if (row.length !== width) {
        throw new Error(`ragged prompt rows: row ${y} has ${row.length} != ${width}`);
      }
      for (let x = 0; x < width; x++) {
        const v = row[x]!;
        if (v !== -1 && v !== 0 && v !== 1) {
          throw new Error(`invalid prompt value ${v} at (${x}, ${y})`);
        }
        layer.values[y * width + x] = v;
      }
    }
    return layer;
  }
}
