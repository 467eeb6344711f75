/** The four figure families, built purely from exported result files. */
import * as fs from "fs";
import * as path from "path";

import { SchemaError } from "./csv";
import {
  AblationRow, HistogramBin, ResultRow, SummaryRow, histogramFile,
  parseHistogram,
} from "./schema";
import { Bar, DensityPanel, Series, barChart, densityPanels, lineChart } from "./svg";

function bySeries(rows: SummaryRow[]): Map<string, SummaryRow[]> {
  const out = new Map<string, SummaryRow[]>();
  for (const r of rows) {
    if (!out.has(r.policy)) out.set(r.policy, []);
    out.get(r.policy)!.push(r);
  }
  return out;
}

export function successVsArrivalRate(rows: SummaryRow[]): string {
  const series: Series[] = [...bySeries(rows).entries()].map(([policy, rs]) => ({
    label: policy,
    points: rs.map((r) => ({ x: r.lam, y: r.success_rate_mean,
                             err: r.success_rate_std })),
  }));
  return lineChart({
    title: "Task success rate vs arrival rate",
    xLabel: "arrival rate (tasks/s)",
    yLabel: "success rate",
    yMin: 0,
    yMax: 1.02,
  }, series);
}

export function updateFreqVsArrivalRate(rows: SummaryRow[]): string {
  const series: Series[] = [...bySeries(rows).entries()].map(([policy, rs]) => ({
    label: policy,
    points: rs.map((r) => ({ x: r.lam, y: r.update_freq_mean,
                             err: r.update_freq_std })),
  }));
  return lineChart({
    title: "Status update frequency vs arrival rate",
    xLabel: "arrival rate (tasks/s)",
    yLabel: "updates/s",
    yMin: 0,
  }, series);
}

/** Normalized density over the finite bins (overflow mass excluded from the
 *  drawing); the finite-bin densities integrate to one. */
export function binsToDensity(bins: HistogramBin[]): DensityPanel["steps"] {
  const finite = bins.filter((b) => Number.isFinite(b.right));
  const mass = finite.reduce((acc, b) => acc + b.count, 0);
  if (mass === 0) {
    throw new SchemaError("histogram holds no finite-interval mass");
  }
  return finite.map((b) => ({
    left: b.left,
    right: b.right,
    density: b.count / (mass * (b.right - b.left)),
  }));
}

export function mergeHistograms(files: string[]): HistogramBin[] {
  let merged: HistogramBin[] | null = null;
  for (const f of files) {
    const bins = parseHistogram(f);
    if (merged === null) {
      merged = bins.map((b) => ({ ...b }));
    } else {
      if (bins.length !== merged.length) {
        throw new SchemaError(`${f}: histogram binning differs across runs`);
      }
      bins.forEach((b, i) => (merged![i].count += b.count));
    }
  }
  if (merged === null) throw new SchemaError("no histogram files found");
  return merged;
}

export function intervalDensityFigure(resultsDir: string, results: ResultRow[],
                                      policy: string,
                                      lams: number[]): string {
  const panels: DensityPanel[] = lams.map((lam) => {
    const seeds = results
      .filter((r) => r.policy === policy && r.lam === lam)
      .map((r) => r.seed);
    if (seeds.length === 0) {
      throw new SchemaError(
        `results.csv: no rows for policy "${policy}" at arrival rate ${lam}`);
    }
    const files = seeds.map((s) => histogramFile(resultsDir, policy, lam, s));
    for (const f of files) {
      if (!fs.existsSync(f)) {
        throw new SchemaError(`missing histogram file ${f}`);
      }
    }
    const steps = binsToDensity(mergeHistograms(files));
    // trim the trailing empty bins so the busy small intervals stay visible
    let last = steps.length - 1;
    while (last > 0 && steps[last].density === 0) last--;
    return {
      title: `arrival rate ${lam}/s`,
      steps: steps.slice(0, last + 1),
    };
  });
  return densityPanels({
    title: `Update interval density (${policy})`,
    xLabel: "interval between updates (s)",
    yLabel: "density (1/s)",
  }, panels);
}

export function ablationSuccessFigure(rows: AblationRow[]): string {
  const bars: Bar[] = rows.map((r) => ({
    label: `${r.d_sem}`,
    value: r.success_rate_mean,
    err: r.success_rate_std,
  }));
  return barChart({
    title: "Success rate vs semantic width",
    xLabel: "semantic vector width",
    yLabel: "success rate",
    yMin: 0,
    yMax: 1.05,
  }, bars);
}

export function ablationUpdateFigure(rows: AblationRow[]): string {
  const bars: Bar[] = rows.map((r) => ({
    label: `${r.d_sem}`,
    value: r.update_freq_mean,
    err: r.update_freq_std,
  }));
  return barChart({
    title: "Update frequency vs semantic width",
    xLabel: "semantic vector width",
    yLabel: "updates/s",
    yMin: 0,
  }, bars);
}
