/**
 * Polyline points for a target-rank curve in a w by h box. Rank 1 sits at
 * the top edge, `maxRank` at the bottom, iterations spread evenly across
 * the width. A single-point curve renders as a point at the left edge.
 */
export function sparklinePoints(
  curve: number[],
  w: number,
  h: number,
  maxRank: number,
): string {
  if (curve.length === 0) return "";
  const span = Math.max(maxRank - 1, 1);
  const dx = curve.length > 1 ? w / (curve.length - 1) : 0;
  return curve
    .map((rank, i) => {
      const y = ((rank - 1) / span) * h;
      return `${(i * dx).toFixed(2)},${y.toFixed(2)}`;
    })
    .join(" ");
}
