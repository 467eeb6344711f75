#!/usr/bin/env node
/** Renders the four figure families from a cfnsync export directory.
 *
 *   cfnsync-figures --results <dir> --out <dir> [--format svg|png]
 *                   [--policy semantic] [--interval-lams 20,60]
 *
 * The results directory must hold results.csv, results_summary.csv,
 * ablation_summary.csv, manifest.json and histograms/. Any schema problem
 * exits nonzero with a diagnostic naming the offending column or file.
 */
import * as fs from "fs";
import * as path from "path";

import { SchemaError } from "./csv";
import {
  ablationSuccessFigure, ablationUpdateFigure, intervalDensityFigure,
  successVsArrivalRate, updateFreqVsArrivalRate,
} from "./charts";
import { parseAblation, parseResults, parseSummary, readManifest } from "./schema";

interface Args {
  results: string;
  out: string;
  format: "svg" | "png";
  policy: string;
  intervalLams: number[];
}

export function parseArgs(argv: string[]): Args {
  const args: Args = {
    results: "",
    out: "",
    format: "svg",
    policy: "semantic",
    intervalLams: [20, 60],
  };
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    const next = () => {
      i++;
      if (i >= argv.length) throw new Error(`flag ${a} needs a value`);
      return argv[i];
    };
    if (a === "--results") args.results = next();
    else if (a === "--out") args.out = next();
    else if (a === "--format") {
      const v = next();
      if (v !== "svg" && v !== "png") {
        throw new Error(`--format must be svg or png, got ${v}`);
      }
      args.format = v;
    } else if (a === "--policy") args.policy = next();
    else if (a === "--interval-lams") {
      args.intervalLams = next().split(",").map(Number);
    } else {
      throw new Error(`unknown flag ${a}`);
    }
  }
  if (!args.results || !args.out) {
    throw new Error("usage: cfnsync-figures --results <dir> --out <dir> [--format svg|png]");
  }
  return args;
}

function writeFigure(outDir: string, name: string, svg: string,
                     format: "svg" | "png"): string {
  const file = path.join(outDir, `${name}.${format}`);
  if (format === "svg") {
    fs.writeFileSync(file, svg);
  } else {
    // rasterize lazily so svg-only runs never need the native module
    const { Resvg } = require("@resvg/resvg-js");
    const png = new Resvg(svg, { fitTo: { mode: "zoom", value: 2 } })
      .render()
      .asPng();
    fs.writeFileSync(file, png);
  }
  return file;
}

export function run(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (e) {
    console.error(String(e instanceof Error ? e.message : e));
    return 2;
  }
  try {
    readManifest(args.results);
    const summary = parseSummary(path.join(args.results, "results_summary.csv"));
    const results = parseResults(path.join(args.results, "results.csv"));
    const ablation = parseAblation(path.join(args.results, "ablation_summary.csv"));

    fs.mkdirSync(args.out, { recursive: true });
    const written = [
      writeFigure(args.out, "success_vs_arrival_rate",
                  successVsArrivalRate(summary), args.format),
      writeFigure(args.out, "update_freq_vs_arrival_rate",
                  updateFreqVsArrivalRate(summary), args.format),
      writeFigure(args.out, "update_interval_density",
                  intervalDensityFigure(args.results, results, args.policy,
                                        args.intervalLams), args.format),
      writeFigure(args.out, "ablation_success",
                  ablationSuccessFigure(ablation), args.format),
      writeFigure(args.out, "ablation_update_freq",
                  ablationUpdateFigure(ablation), args.format),
    ];
    for (const f of written) console.log(`wrote ${f}`);
    return 0;
  } catch (e) {
    if (e instanceof SchemaError) {
      console.error(`schema error: ${e.message}`);
      return 1;
    }
    if (e instanceof Error && (e as NodeJS.ErrnoException).code === "ENOENT") {
      console.error(`missing input: ${(e as NodeJS.ErrnoException).path ?? e.message}`);
      return 1;
    }
    throw e;
  }
}

if (require.main === module) {
  process.exit(run(process.argv.slice(2)));
}
