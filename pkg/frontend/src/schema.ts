/** Column contracts for the simulator's export files. */
import * as fs from "fs";
import * as path from "path";

import { SchemaError, columnIndex, parseCsv, toNumber } from "./csv";

export const SUPPORTED_SCHEMA_VERSION = 1;

export interface SummaryRow {
  policy: string;
  lam: number;
  n_seeds: number;
  success_rate_mean: number;
  success_rate_std: number;
  update_freq_mean: number;
  update_freq_std: number;
}

export interface ResultRow {
  policy: string;
  lam: number;
  seed: number;
  success_rate: number;
  update_freq: number;
}

export interface AblationRow {
  d_sem: number;
  lam: number;
  success_rate_mean: number;
  success_rate_std: number;
  update_freq_mean: number;
  update_freq_std: number;
}

export interface HistogramBin {
  left: number;
  right: number; // Infinity for the overflow bin
  count: number;
}

const SUMMARY_COLUMNS = [
  "policy", "lam", "n_seeds", "success_rate_mean", "success_rate_std",
  "update_freq_mean", "update_freq_std",
] as const;

const RESULT_COLUMNS = [
  "policy", "lam", "seed", "success_rate", "update_freq",
] as const;

const ABLATION_COLUMNS = [
  "d_sem", "lam", "success_rate_mean", "success_rate_std",
  "update_freq_mean", "update_freq_std",
] as const;

const HISTOGRAM_COLUMNS = ["bin_left", "bin_right", "count"] as const;

function readRows(file: string): { header: string[]; rows: string[][] } {
  const table = parseCsv(fs.readFileSync(file, "utf8"));
  if (table.length === 0) {
    throw new SchemaError(`${file}: empty file`);
  }
  return { header: table[0], rows: table.slice(1) };
}

export function parseSummary(file: string): SummaryRow[] {
  const { header, rows } = readRows(file);
  const ix = columnIndex(header, SUMMARY_COLUMNS, file);
  if (rows.length === 0) throw new SchemaError(`${file}: no data rows`);
  return rows.map((r) => ({
    policy: r[ix.policy],
    lam: toNumber(r[ix.lam], "lam", file),
    n_seeds: toNumber(r[ix.n_seeds], "n_seeds", file),
    success_rate_mean: toNumber(r[ix.success_rate_mean], "success_rate_mean", file),
    success_rate_std: toNumber(r[ix.success_rate_std], "success_rate_std", file),
    update_freq_mean: toNumber(r[ix.update_freq_mean], "update_freq_mean", file),
    update_freq_std: toNumber(r[ix.update_freq_std], "update_freq_std", file),
  }));
}

export function parseResults(file: string): ResultRow[] {
  const { header, rows } = readRows(file);
  const ix = columnIndex(header, RESULT_COLUMNS, file);
  if (rows.length === 0) throw new SchemaError(`${file}: no data rows`);
  return rows.map((r) => ({
    policy: r[ix.policy],
    lam: toNumber(r[ix.lam], "lam", file),
    seed: toNumber(r[ix.seed], "seed", file),
    success_rate: toNumber(r[ix.success_rate], "success_rate", file),
    update_freq: toNumber(r[ix.update_freq], "update_freq", file),
  }));
}

export function parseAblation(file: string): AblationRow[] {
  const { header, rows } = readRows(file);
  const ix = columnIndex(header, ABLATION_COLUMNS, file);
  if (rows.length === 0) throw new SchemaError(`${file}: no data rows`);
  return rows.map((r) => ({
    d_sem: toNumber(r[ix.d_sem], "d_sem", file),
    lam: toNumber(r[ix.lam], "lam", file),
    success_rate_mean: toNumber(r[ix.success_rate_mean], "success_rate_mean", file),
    success_rate_std: toNumber(r[ix.success_rate_std], "success_rate_std", file),
    update_freq_mean: toNumber(r[ix.update_freq_mean], "update_freq_mean", file),
    update_freq_std: toNumber(r[ix.update_freq_std], "update_freq_std", file),
  }));
}

export function parseHistogram(file: string): HistogramBin[] {
  const { header, rows } = readRows(file);
  const ix = columnIndex(header, HISTOGRAM_COLUMNS, file);
  return rows.map((r) => ({
    left: toNumber(r[ix.bin_left], "bin_left", file),
    right: r[ix.bin_right] === "inf" || r[ix.bin_right] === "Infinity"
      ? Infinity
      : toNumber(r[ix.bin_right], "bin_right", file),
    count: toNumber(r[ix.count], "count", file),
  }));
}

export interface Manifest {
  schema_version: number;
  hist_bin_width: number;
  backend?: string;
}

export function readManifest(dir: string): Manifest {
  const file = path.join(dir, "manifest.json");
  const data = JSON.parse(fs.readFileSync(file, "utf8"));
  if (data.schema_version !== SUPPORTED_SCHEMA_VERSION) {
    throw new SchemaError(
      `${file}: schema_version ${data.schema_version} unsupported ` +
      `(expected ${SUPPORTED_SCHEMA_VERSION})`);
  }
  return data as Manifest;
}

export function histogramFile(dir: string, policy: string, lam: number,
                              seed: number): string {
  const lamText = Number.isInteger(lam) ? String(lam) : String(lam);
  return path.join(dir, "histograms",
    `intervals_${policy}_lam${lamText}_seed${seed}.csv`);
}
