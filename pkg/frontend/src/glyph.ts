// Client-side "images": each item renders as a deterministic radial glyph
// of its feature vector so a human can steer sessions on synthetic data.
// Real deployments would swap these for an asset URL on the item payload.

function hueOf(text: string): number {
  let h = 2166136261;
  for (let i = 0; i < text.length; i++) {
    h = (h ^ text.charCodeAt(i)) >>> 0;
    h = (h * 16777619) >>> 0;
  }
  return h % 360;
}

function scaled(features: number[]): number[] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of features) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  const span = hi - lo;
  if (!(span > 0)) return features.map(() => 0.5);
  return features.map((v) => (v - lo) / span);
}

/**
 * SVG markup for one item: a closed radial polygon (one spoke per feature,
 * min-max scaled within the item) over a heat strip of the raw ordering.
 * Pure string building; identical input gives an identical string.
 */
export function featureGlyph(
  features: number[],
  seedText: string,
  size = 96,
): string {
  const n = Math.max(features.length, 1);
  const vals = scaled(features);
  const cx = size / 2;
  const cy = size * 0.42;
  const rMin = size * 0.06;
  const rMax = size * 0.36;
  const points: string[] = [];
  for (let i = 0; i < vals.length; i++) {
    const angle = (2 * Math.PI * i) / n - Math.PI / 2;
    const r = rMin + (rMax - rMin) * (vals[i] as number);
    const x = cx + r * Math.cos(angle);
    const y = cy + r * Math.sin(angle);
    points.push(`${x.toFixed(2)},${y.toFixed(2)}`);
  }
  const hue = hueOf(seedText);
  const cells: string[] = [];
  const stripY = size * 0.84;
  const cellW = size / n;
  for (let i = 0; i < vals.length; i++) {
    const light = 25 + 60 * (vals[i] as number);
    cells.push(
      `<rect x="${(i * cellW).toFixed(2)}" y="${stripY.toFixed(2)}" ` +
        `width="${cellW.toFixed(2)}" height="${(size * 0.12).toFixed(2)}" ` +
        `fill="hsl(${hue},60%,${light.toFixed(1)}%)"/>`,
    );
  }
  return (
    `<svg viewBox="0 0 ${size} ${size}" xmlns="http://www.w3.org/2000/svg" role="img">` +
    `<circle cx="${cx}" cy="${cy}" r="${rMax.toFixed(2)}" ` +
    `fill="none" stroke="hsl(${hue},30%,80%)" stroke-width="1"/>` +
    `<polygon points="${points.join(" ")}" ` +
    `fill="hsl(${hue},65%,62%)" fill-opacity="0.55" ` +
    `stroke="hsl(${hue},70%,40%)" stroke-width="1.5"/>` +
    cells.join("") +
    `</svg>`
  );
}
