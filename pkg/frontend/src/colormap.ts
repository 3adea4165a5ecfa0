/** Viridis colormap: perceptually uniform, interpolated from anchor stops. */

const VIRIDIS: [number, number, number][] = [
  [68, 1, 84], [71, 13, 96], [72, 24, 106], [72, 35, 116], [71, 45, 123],
  [69, 55, 129], [66, 64, 134], [62, 73, 137], [58, 82, 139], [54, 90, 140],
  [50, 98, 141], [47, 106, 141], [43, 114, 142], [40, 121, 142], [37, 129, 142],
  [34, 136, 141], [31, 144, 140], [29, 151, 138], [28, 159, 135], [30, 166, 131],
  [36, 173, 126], [46, 180, 119], [59, 187, 110], [74, 193, 100], [92, 199, 88],
  [110, 204, 75], [130, 209, 61], [151, 213, 47], [173, 216, 33], [195, 219, 24],
  [217, 221, 26], [238, 223, 37], [253, 231, 37],
];

/** Map t in [0, 1] to a hex color on the viridis ramp (clamped). */
export function viridis(t: number): string {
  const u = Math.max(0, Math.min(1, t)) * (VIRIDIS.length - 1);
  const i = Math.min(Math.floor(u), VIRIDIS.length - 2);
  const f = u - i;
  const mix = (a: number, b: number) => Math.round(a + f * (b - a));
  const [r, g, b] = [0, 1, 2].map((k) => mix(VIRIDIS[i][k], VIRIDIS[i + 1][k]));
  return `#${[r, g, b].map((v) => v.toString(16).padStart(2, '0')).join('')}`;
}

/** Normalize values to [0, 1]; constant input maps to 0.5. */
export function normalize(values: number[]): number[] {
  const finite = values.filter(Number.isFinite);
  const lo = Math.min(...finite);
  const hi = Math.max(...finite);
  if (!(hi > lo)) return values.map(() => 0.5);
  return values.map((v) => (v - lo) / (hi - lo));
}
