/** Minimal string-based SVG construction: deterministic output, no DOM needed. */

export interface Extent {
  lo: number;
  hi: number;
}

export function extent(values: number[], pad = 0): Extent {
  const finite = values.filter(Number.isFinite);
  let lo = Math.min(...finite);
  let hi = Math.max(...finite);
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const span = hi - lo;
  return { lo: lo - pad * span, hi: hi + pad * span };
}

/** Linear map from a data extent onto pixel coordinates. */
export function scale(e: Extent, pixelLo: number, pixelHi: number): (v: number) => number {
  const k = (pixelHi - pixelLo) / (e.hi - e.lo);
  return (v: number) => pixelLo + (v - e.lo) * k;
}

function fmt(v: number): string {
  return Number.isInteger(v) ? String(v) : v.toFixed(2);
}

export function tag(name: string, attrs: Record<string, string | number>, body = ''): string {
  const a = Object.entries(attrs)
    .map(([k, v]) => `${k}="${typeof v === 'number' ? fmt(v) : v}"`)
    .join(' ');
  return body === '' ? `<${name} ${a}/>` : `<${name} ${a}>${body}</${name}>`;
}

export function polylinePath(xs: number[], ys: number[]): string {
  const parts: string[] = [];
  for (let i = 0; i < xs.length; i++) {
    parts.push(`${i === 0 ? 'M' : 'L'}${fmt(xs[i])} ${fmt(ys[i])}`);
  }
  return parts.join('');
}

/** Per-segment colored polyline (each segment stroked with its own color). */
export function coloredSegments(xs: number[], ys: number[], colors: string[],
                                width = 2.5): string {
  const parts: string[] = [];
  for (let i = 0; i + 1 < xs.length; i++) {
    parts.push(tag('path', {
      d: `M${fmt(xs[i])} ${fmt(ys[i])}L${fmt(xs[i + 1])} ${fmt(ys[i + 1])}`,
      stroke: colors[i],
      'stroke-width': width,
      'stroke-linecap': 'round',
      fill: 'none',
    }));
  }
  return parts.join('');
}

export interface PanelSpec {
  name: string;
  title: string;
  body: string;
}

/** Assemble titled panels on a fixed grid into one SVG document. */
export function document(panels: PanelSpec[], columns: number, panelWidth: number,
                         panelHeight: number): string {
  const rows = Math.ceil(panels.length / columns);
  const width = columns * panelWidth;
  const height = rows * panelHeight;
  const parts = panels.map((p, i) => {
    const x = (i % columns) * panelWidth;
    const y = Math.floor(i / columns) * panelHeight;
    const title = tag('text', {
      x: panelWidth / 2, y: 22, 'text-anchor': 'middle',
      'font-family': 'sans-serif', 'font-size': 14,
    }, p.title);
    return tag('g', {
      class: 'panel', 'data-name': p.name, transform: `translate(${x},${y})`,
    }, title + p.body);
  });
  const bg = tag('rect', { x: 0, y: 0, width, height, fill: 'white' });
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
    `viewBox="0 0 ${width} ${height}">` + bg + parts.join('') + '</svg>\n'
  );
}

export function axisFrame(x0: number, y0: number, x1: number, y1: number): string {
  return tag('rect', {
    x: x0, y: y0, width: x1 - x0, height: y1 - y0,
    fill: 'none', stroke: '#999', 'stroke-width': 1,
  });
}
