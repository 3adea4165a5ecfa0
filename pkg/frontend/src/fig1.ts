import { readdirSync } from 'fs';
import { join } from 'path';

import { PRIOR_GRID_HEADER, PROFILE_HEADER, readCsv, SchemaError, Table } from './csv.js';
import { normalize, viridis } from './colormap.js';
import {
  axisFrame, coloredSegments, document, extent, PanelSpec, polylinePath, scale, tag,
} from './svg.js';

const PANEL = 380;
const MARGIN = 44;

export interface Fig1Spec {
  inDir: string;
}

interface Fiber {
  name: string;
  table: Table;
}

function loadFibers(inDir: string): Fiber[] {
  const dir = join(inDir, 'fibers');
  let names: string[];
  try {
    names = readdirSync(dir).filter((n) => n.endsWith('.csv')).sort();
  } catch {
    throw new SchemaError(`missing fiber directory: ${dir}`);
  }
  if (names.length === 0) throw new SchemaError(`no fiber CSVs in ${dir}`);
  return names.map((name) => ({ name, table: readCsv(join(dir, name), PROFILE_HEADER) }));
}

function spatialPanel(body: (sx: (v: number) => number, sy: (v: number) => number) => string,
                      xs: number[], ys: number[]): string {
  const ex = extent(xs, 0.05);
  const ey = extent(ys, 0.05);
  const sx = scale(ex, MARGIN, PANEL - MARGIN);
  const sy = scale(ey, PANEL - MARGIN, MARGIN); // flip: SVG y grows downward
  return body(sx, sy) + axisFrame(MARGIN, MARGIN, PANEL - MARGIN, PANEL - MARGIN);
}

function heatmap(grid: Table, sx: (v: number) => number, sy: (v: number) => number): string {
  const x1 = grid.column('x1');
  const x2 = grid.column('x2');
  const density = normalize(grid.column('density'));
  const ux = [...new Set(x1)].sort((a, b) => a - b);
  const uy = [...new Set(x2)].sort((a, b) => a - b);
  if (ux.length < 2 || uy.length < 2) throw new SchemaError('prior grid is not a 2-D lattice');
  const w = Math.abs(sx(ux[1]) - sx(ux[0]));
  const h = Math.abs(sy(uy[1]) - sy(uy[0]));
  const cells: string[] = [];
  for (let i = 0; i < x1.length; i++) {
    cells.push(tag('rect', {
      x: sx(x1[i]) - w / 2, y: sy(x2[i]) - h / 2,
      width: w * 1.02, height: h * 1.02, fill: viridis(density[i]),
    }));
  }
  return tag('g', { class: 'heatmap' }, cells.join(''));
}

const MAX_COLORED_SEGMENTS = 1200; // display decimation; full data stays in the CSV

function decimate(n: number): number[] {
  const stride = Math.max(1, Math.ceil(n / MAX_COLORED_SEGMENTS));
  const idx: number[] = [];
  for (let i = 0; i < n; i += stride) idx.push(i);
  if (idx[idx.length - 1] !== n - 1) idx.push(n - 1);
  return idx;
}

function fiberCurves(fibers: Fiber[], column: string | null,
                     sx: (v: number) => number, sy: (v: number) => number): string {
  const parts: string[] = [];
  for (const fiber of fibers) {
    const xs = fiber.table.column('x1').map(sx);
    const ys = fiber.table.column('x2').map(sy);
    if (column === null) {
      parts.push(tag('path', {
        d: polylinePath(xs, ys), stroke: '#888', 'stroke-width': 1, fill: 'none',
        class: 'fiber', 'data-fiber': fiber.name,
      }));
    } else {
      // Independent color normalization per fiber: colors are not comparable
      // across fibers, only along each one.
      const t = normalize(fiber.table.column(column));
      const idx = decimate(xs.length);
      const dx = idx.map((i) => xs[i]);
      const dy = idx.map((i) => ys[i]);
      const colors = idx.slice(0, -1).map((i, k) => viridis((t[i] + t[idx[k + 1]]) / 2));
      parts.push(tag('g', { class: 'fiber', 'data-fiber': fiber.name },
                     coloredSegments(dx, dy, colors)));
    }
  }
  return parts.join('');
}

function profilePanel(profile: Table): string {
  const s = profile.column('s');
  const restricted = profile.column('restricted_norm');
  const disint = profile.column('disint_norm');
  const ex = extent(s);
  const ey = extent([...restricted, ...disint], 0.05);
  const sx = scale(ex, MARGIN, PANEL - MARGIN);
  const sy = scale(ey, PANEL - MARGIN, MARGIN);
  const curve = (vals: number[], color: string, name: string) =>
    tag('path', {
      d: polylinePath(s.map(sx), vals.map(sy)), stroke: color, 'stroke-width': 2,
      fill: 'none', class: 'profile', 'data-name': name,
    });
  const legend = tag('text', {
    x: PANEL - MARGIN, y: MARGIN - 8, 'text-anchor': 'end',
    'font-family': 'sans-serif', 'font-size': 11, fill: '#333',
  }, 'dark: restricted, gold: disintegration');
  return curve(restricted, '#1f2430', 'restricted') + curve(disint, '#d4a017', 'disintegration')
    + legend + axisFrame(MARGIN, MARGIN, PANEL - MARGIN, PANEL - MARGIN);
}

/** Four-panel figure: prior + fibers, the y=1.01 profile pair, and the two
 * per-fiber colormap panels (restricted vs disintegration). */
export function renderFig1(spec: Fig1Spec): string {
  const grid = readCsv(join(spec.inDir, 'prior_grid.csv'), PRIOR_GRID_HEADER);
  const fibers = loadFibers(spec.inDir);
  const profile = readCsv(join(spec.inDir, 'density_y1.01.csv'), PROFILE_HEADER);

  const allX = fibers.flatMap((f) => f.table.column('x1')).concat(grid.column('x1'));
  const allY = fibers.flatMap((f) => f.table.column('x2')).concat(grid.column('x2'));

  const panels: PanelSpec[] = [
    {
      name: 'prior',
      title: 'Prior density and observation fibers',
      body: spatialPanel((sx, sy) => heatmap(grid, sx, sy) + fiberCurves(fibers, null, sx, sy),
                         allX, allY),
    },
    {
      name: 'profiles',
      title: 'Densities along the y=1.01 fiber',
      body: profilePanel(profile),
    },
    {
      name: 'restricted',
      title: 'Renormalized restricted densities',
      body: spatialPanel((sx, sy) => fiberCurves(fibers, 'restricted_norm', sx, sy),
                         allX, allY),
    },
    {
      name: 'disintegration',
      title: 'Disintegration densities',
      body: spatialPanel((sx, sy) => fiberCurves(fibers, 'disint_norm', sx, sy),
                         allX, allY),
    },
  ];
  return document(panels, 2, PANEL, PANEL);
}
