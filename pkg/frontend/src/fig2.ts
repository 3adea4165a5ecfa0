import { join } from 'path';

import { OM_MINIMA_HEADER, OM_SCAN_HEADER, readCsv, SchemaError, Table } from './csv.js';
import {
  axisFrame, document, extent, PanelSpec, polylinePath, scale, tag,
} from './svg.js';

const PANEL_W = 480;
const PANEL_H = 420;
const MARGIN = 48;
const CURVE_COLORS = ['#3a6bb0', '#4d9a8f', '#1f2430', '#b0763a', '#e0756f'];

export interface Fig2Spec {
  inDir: string;
  /** Shift each curve to zero at its first node (display only; marker
   * arc-length positions are unaffected). */
  recenter: boolean;
}

interface Curve {
  p: number;
  s: number[];
  values: number[];
}

function splitCurves(scan: Table): Curve[] {
  const curves: Curve[] = [];
  let current: Curve | null = null;
  for (const [s, p, v] of scan.rows) {
    if (current === null || p !== current.p) {
      current = { p, s: [], values: [] };
      curves.push(current);
    }
    current.s.push(s);
    current.values.push(v);
  }
  if (curves.length === 0) throw new SchemaError('OM scan holds no curves');
  return curves;
}

function pLabel(p: number): string {
  return Number.isFinite(p) ? `p=${p}` : 'p=inf';
}

function omPanel(scan: Table, minima: Table, recenter: boolean): string {
  const curves = splitCurves(scan);
  const shifts = new Map<number, number>();
  for (const c of curves) shifts.set(c.p, recenter ? -c.values[0] : 0);

  // Constant vertical spacing between curves; offsets are display-only.
  const span = Math.max(...curves.map((c) => {
    const e = extent(c.values);
    return e.hi - e.lo;
  }));
  const spacing = 1.3 * span;
  const offsets = new Map<number, number>();
  curves.forEach((c, i) => offsets.set(c.p, i * spacing));

  const displayed = curves.flatMap((c) =>
    c.values.map((v) => v + shifts.get(c.p)! + offsets.get(c.p)!));
  const ex = extent(curves[0].s);
  const ey = extent(displayed, 0.08);
  const sx = scale(ex, MARGIN, PANEL_W - MARGIN);
  const sy = scale(ey, PANEL_H - MARGIN, MARGIN);

  const parts: string[] = [];
  curves.forEach((c, i) => {
    const lift = shifts.get(c.p)! + offsets.get(c.p)!;
    parts.push(tag('path', {
      d: polylinePath(c.s.map(sx), c.values.map((v) => sy(v + lift))),
      stroke: CURVE_COLORS[i % CURVE_COLORS.length], 'stroke-width': 1.8, fill: 'none',
      class: 'om-curve', 'data-p': pLabel(c.p),
    }));
    parts.push(tag('text', {
      x: PANEL_W - MARGIN + 4, y: sy(c.values[c.values.length - 1] + lift) + 4,
      'font-family': 'sans-serif', 'font-size': 11,
      fill: CURVE_COLORS[i % CURVE_COLORS.length],
    }, pLabel(c.p)));
  });

  for (const [p, , s, value] of minima.rows) {
    if (!offsets.has(p)) {
      throw new SchemaError(`minima CSV references p=${p} absent from the scan`);
    }
    parts.push(tag('circle', {
      cx: sx(s), cy: sy(value + shifts.get(p)! + offsets.get(p)!), r: 3.5,
      fill: 'white', stroke: '#c0392b', 'stroke-width': 1.5,
      class: 'minimum', 'data-p': pLabel(p),
    }));
  }
  return parts.join('') + axisFrame(MARGIN, MARGIN, PANEL_W - MARGIN, PANEL_H - MARGIN);
}

/** Two panels of vertically spread l_p OM curves with local-minimum markers:
 * restricted measure on the left, disintegration on the right. */
export function renderFig2(spec: Fig2Spec): string {
  const panels: PanelSpec[] = ['restricted', 'disintegration'].map((variant) => {
    const scan = readCsv(join(spec.inDir, `om_scan_${variant}.csv`), OM_SCAN_HEADER);
    const minima = readCsv(join(spec.inDir, `om_minima_${variant}.csv`), OM_MINIMA_HEADER);
    const title = variant === 'restricted'
      ? 'OM functionals: Riemannian restricted measure'
      : 'OM functionals: disintegration';
    return { name: variant, title, body: omPanel(scan, minima, spec.recenter) };
  });
  return document(panels, 2, PANEL_W, PANEL_H);
}
