import { readFileSync } from 'fs';

/** Raised when an input CSV does not match its expected schema. */
export class SchemaError extends Error {}

export interface Table {
  header: string[];
  rows: number[][];
  /** Column values by header name. */
  column(name: string): number[];
}

function parseNumber(raw: string, file: string, line: number): number {
  // The producer formats with %.17g; infinities appear as "inf"/"-inf".
  if (raw === 'inf') return Infinity;
  if (raw === '-inf') return -Infinity;
  const v = Number(raw);
  if (raw === '' || Number.isNaN(v)) {
    throw new SchemaError(`${file}:${line}: not a number: "${raw}"`);
  }
  return v;
}

/**
 * Read a CSV with a mandatory header row. When `expectedHeader` is given the
 * header must match it exactly; otherwise the column count is still enforced
 * per row.
 */
export function readCsv(path: string, expectedHeader?: string[]): Table {
  let text: string;
  try {
    text = readFileSync(path, 'utf8');
  } catch {
    throw new SchemaError(`missing input file: ${path}`);
  }
  const lines = text.split('\n').filter((l) => l.length > 0);
  if (lines.length === 0) throw new SchemaError(`${path}: empty file`);
  const header = lines[0].split(',');
  if (expectedHeader && header.join(',') !== expectedHeader.join(',')) {
    throw new SchemaError(
      `${path}: header mismatch\n  expected: ${expectedHeader.join(',')}\n  found:    ${header.join(',')}`,
    );
  }
  const rows: number[][] = [];
  for (let i = 1; i < lines.length; i++) {
    const cells = lines[i].split(',');
    if (cells.length !== header.length) {
      throw new SchemaError(`${path}:${i + 1}: expected ${header.length} columns, found ${cells.length}`);
    }
    rows.push(cells.map((c) => parseNumber(c, path, i + 1)));
  }
  return {
    header,
    rows,
    column(name: string): number[] {
      const j = header.indexOf(name);
      if (j < 0) throw new SchemaError(`${path}: no column "${name}"`);
      return rows.map((r) => r[j]);
    },
  };
}

export const PROFILE_HEADER = [
  's', 'x1', 'x2',
  'log_restricted_unnorm', 'log_disint_unnorm', 'restricted_norm', 'disint_norm',
];
export const PRIOR_GRID_HEADER = ['x1', 'x2', 'density'];
export const OM_SCAN_HEADER = ['s', 'p', 'om_value'];
export const OM_MINIMA_HEADER = ['p', 'count', 's', 'om_value'];
