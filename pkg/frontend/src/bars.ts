/**
 * Probability bar model: turns class probability vectors into render-ready
 * rows (label, percent text, bar width) for the prompted / non-prompted
 * side-by-side comparison.
 */

export interface BarRow {
  classIndex: number;
  probability: number;
  /** Bar width as a fraction of the track, equal to the probability. */
  widthFraction: number;
  /** "93.0%" style label, one decimal place. */
  percentText: string;
  isArgmax: boolean;
}

export function probabilityBars(probabilities: number[]): BarRow[] {
  if (probabilities.length === 0) throw new Error("empty probability vector");
  let argmax = 0;
  for (let i = 1; i < probabilities.length; i++) {
    if (probabilities[i]! > probabilities[argmax]!) argmax = i;
  }
  return probabilities.map((p, i) => {
    if (!Number.isFinite(p) || p < 0 || p > 1) {
      throw new Error(`probability out of range at class ${i}: ${p}`);
    }
    return {
      classIndex: i,
      probability: p,
      widthFraction: p,
      percentText: `${(p * 100).toFixed(1)}%`,
      isArgmax: i === argmax,
    };
  });
}
