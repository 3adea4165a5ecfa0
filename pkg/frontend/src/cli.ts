#!/usr/bin/env node
/**
 * render-figs --figure fig1|fig2 --in <dir> --out <file.svg> [--recenter]
 *
 * Renders the fibercond reproduce pipelines' CSV outputs as static SVG images.
 * Rendering is a pure function of the CSV content; no densities are
 * recomputed here. Schema violations abort with a nonzero exit code.
 */
import { mkdirSync, writeFileSync } from 'fs';
import { dirname } from 'path';

import { SchemaError } from './csv.js';
import { renderFig1 } from './fig1.js';
import { renderFig2 } from './fig2.js';

interface Args {
  figure: string;
  inDir: string;
  out: string;
  recenter: boolean;
}

function parseArgs(argv: string[]): Args {
  const args: Partial<Args> = { recenter: false };
  for (let i = 0; i < argv.length; i++) {
    switch (argv[i]) {
      case '--figure':
        args.figure = argv[++i];
        break;
      case '--in':
        args.inDir = argv[++i];
        break;
      case '--out':
        args.out = argv[++i];
        break;
      case '--recenter':
        args.recenter = true;
        break;
      default:
        throw new Error(`unknown argument: ${argv[i]}`);
    }
  }
  if (!args.figure || !args.inDir || !args.out) {
    throw new Error('usage: render-figs --figure fig1|fig2 --in <dir> --out <file> [--recenter]');
  }
  return args as Args;
}

export function main(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    return 2;
  }
  try {
    let svg: string;
    if (args.figure === 'fig1') {
      svg = renderFig1({ inDir: args.inDir });
    } else if (args.figure === 'fig2') {
      svg = renderFig2({ inDir: args.inDir, recenter: args.recenter });
    } else {
      console.error(`unknown figure: ${args.figure} (expected fig1|fig2)`);
      return 2;
    }
    mkdirSync(dirname(args.out), { recursive: true });
    writeFileSync(args.out, svg);
    console.log(`wrote ${args.out}`);
    return 0;
  } catch (err) {
    if (err instanceof SchemaError) {
      console.error(`schema error: ${err.message}`);
      return 1;
    }
    throw err;
  }
}

process.exit(main(process.argv.slice(2)));
