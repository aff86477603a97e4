/** Stable superpoint-id -> color mapping (same hue across sessions). */

export function idToColor(id: number): [number, number, number] {
  // Knuth multiplicative hash spreads consecutive ids around the hue wheel.
  const hash = (id * 2654435761) >>> 0;
  const hue = (hash % 360) / 360;
  return hslToRgb(hue, 0.65, 0.55);
}

export const HIGHLIGHT: [number, number, number] = [1.0, 0.85, 0.1];
export const DIMMED: [number, number, number] = [0.35, 0.37, 0.42];

export function hslToRgb(h: number, s: number, l: number): [number, number, number] {
  const q = l < 0.5 ? l * (1 + s) : l + s - l * s;
  const p = 2 * l - q;
  const channel = (t: number): number => {
    if (t < 0) t += 1;
    if (t > 1) t -= 1;
    if (t < 1 / 6) return p + (q - p) * 6 * t;
    if (t < 1 / 2) return q;
    if (t < 2 / 3) return p + (q - p) * (2 / 3 - t) * 6;
    return p;
  };
  return [channel(h + 1 / 3), channel(h), channel(h - 1 / 3)];
}

/** Per-point RGB buffer: level-id hues, overridden by the highlight mask. */
export function colorBuffer(
  ids: Uint32Array,
  highlight: Uint8Array,
  anySelection: boolean,
): Float32Array {
  const out = new Float32Array(ids.length * 3);
  for (let i = 0; i < ids.length; i++) {
    let rgb: [number, number, number];
    if (highlight[i]) {
      rgb = HIGHLIGHT;
    } else if (anySelection) {
      rgb = DIMMED;
    } else {
      rgb = idToColor(ids[i]);
    }
    out[i * 3] = rgb[0];
    out[i * 3 + 1] = rgb[1];
    out[i * 3 + 2] = rgb[2];
  }
  return out;
}
