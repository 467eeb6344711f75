/** Deterministic SVG chart primitives: no timestamps, no randomness, so a
 *  rerun reproduces byte-identical files. */

export interface SeriesPoint {
  x: number;
  y: number;
  err?: number;
}

export interface Series {
  label: string;
  points: SeriesPoint[];
}

export interface AxesOptions {
  title: string;
  xLabel: string;
  yLabel: string;
  width?: number;
  height?: number;
  yMin?: number;
  yMax?: number;
}

export const PALETTE = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd",
  "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

const MARGIN = { top: 42, right: 20, bottom: 48, left: 62 };

function fmt(v: number): string {
  // fixed short formatting keeps output stable across runs
  if (!Number.isFinite(v)) return "0";
  return Number(v.toFixed(4)).toString();
}

export function niceTicks(lo: number, hi: number, n = 6): number[] {
  if (hi <= lo) hi = lo + 1;
  const span = hi - lo;
  const raw = span / n;
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  let step = mag;
  for (const m of [1, 2, 2.5, 5, 10]) {
    if (raw <= m * mag) {
      step = m * mag;
      break;
    }
  }
  const start = Math.ceil(lo / step) * step;
  const ticks: number[] = [];
  for (let v = start; v <= hi + step * 1e-9; v += step) {
    ticks.push(Number(v.toFixed(10)));
  }
  return ticks;
}

interface Scale {
  (v: number): number;
}

function frame(opts: AxesOptions, xlo: number, xhi: number, ylo: number,
               yhi: number): { body: string[]; sx: Scale; sy: Scale;
                               w: number; h: number } {
  const w = opts.width ?? 640;
  const h = opts.height ?? 420;
  const iw = w - MARGIN.left - MARGIN.right;
  const ih = h - MARGIN.top - MARGIN.bottom;
  const sx: Scale = (v) => MARGIN.left + ((v - xlo) / (xhi - xlo)) * iw;
  const sy: Scale = (v) => MARGIN.top + ih - ((v - ylo) / (yhi - ylo)) * ih;
  const body: string[] = [];
  body.push(`<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${iw}" height="${ih}" fill="none" stroke="#333" stroke-width="1"/>`);
  for (const t of niceTicks(xlo, xhi)) {
    if (t < xlo - 1e-9 || t > xhi + 1e-9) continue;
    const px = fmt(sx(t));
    body.push(`<line x1="${px}" y1="${fmt(MARGIN.top + ih)}" x2="${px}" y2="${fmt(MARGIN.top + ih + 5)}" stroke="#333"/>`);
    body.push(`<text x="${px}" y="${fmt(MARGIN.top + ih + 18)}" font-size="11" text-anchor="middle">${fmt(t)}</text>`);
    body.push(`<line x1="${px}" y1="${MARGIN.top}" x2="${px}" y2="${fmt(MARGIN.top + ih)}" stroke="#ddd" stroke-width="0.5"/>`);
  }
  for (const t of niceTicks(ylo, yhi)) {
    if (t < ylo - 1e-9 || t > yhi + 1e-9) continue;
    const py = fmt(sy(t));
    body.push(`<line x1="${fmt(MARGIN.left - 5)}" y1="${py}" x2="${MARGIN.left}" y2="${py}" stroke="#333"/>`);
    body.push(`<text x="${fmt(MARGIN.left - 8)}" y="${py}" font-size="11" text-anchor="end" dominant-baseline="middle">${fmt(t)}</text>`);
    body.push(`<line x1="${MARGIN.left}" y1="${py}" x2="${fmt(MARGIN.left + iw)}" y2="${py}" stroke="#ddd" stroke-width="0.5"/>`);
  }
  body.push(`<text x="${fmt(w / 2)}" y="20" font-size="14" font-weight="bold" text-anchor="middle">${opts.title}</text>`);
  body.push(`<text x="${fmt(MARGIN.left + iw / 2)}" y="${fmt(h - 10)}" font-size="12" text-anchor="middle">${opts.xLabel}</text>`);
  body.push(`<text x="16" y="${fmt(MARGIN.top + ih / 2)}" font-size="12" text-anchor="middle" transform="rotate(-90 16 ${fmt(MARGIN.top + ih / 2)})">${opts.yLabel}</text>`);
  return { body, sx, sy, w, h };
}

function wrap(w: number, h: number, body: string[]): string {
  return `<svg xmlns="http://www.w3.org/2000/svg" width="${w}" height="${h}" viewBox="0 0 ${w} ${h}" font-family="Helvetica, Arial, sans-serif">\n<rect width="${w}" height="${h}" fill="white"/>\n${body.join("\n")}\n</svg>\n`;
}

export function lineChart(opts: AxesOptions, series: Series[]): string {
  if (series.length === 0 || series.every((s) => s.points.length === 0)) {
    throw new Error(`chart "${opts.title}": no data series`);
  }
  const xs = series.flatMap((s) => s.points.map((p) => p.x));
  const ys = series.flatMap((s) => s.points.map((p) => [
    p.y - (p.err ?? 0), p.y + (p.err ?? 0)])).flat();
  const xlo = Math.min(...xs);
  const xhi = Math.max(...xs);
  let ylo = opts.yMin ?? Math.min(...ys, 0);
  let yhi = opts.yMax ?? Math.max(...ys) * 1.05;
  if (yhi <= ylo) yhi = ylo + 1;
  const { body, sx, sy, w, h } = frame(opts, xlo, xhi, ylo, yhi);

  series.forEach((s, i) => {
    const color = PALETTE[i % PALETTE.length];
    const pts = [...s.points].sort((a, b) => a.x - b.x);
    const poly = pts.map((p) => `${fmt(sx(p.x))},${fmt(sy(Math.min(Math.max(p.y, ylo), yhi)))}`).join(" ");
    body.push(`<polyline points="${poly}" fill="none" stroke="${color}" stroke-width="2"/>`);
    for (const p of pts) {
      const px = fmt(sx(p.x));
      const py = fmt(sy(Math.min(Math.max(p.y, ylo), yhi)));
      body.push(`<circle cx="${px}" cy="${py}" r="3" fill="${color}"/>`);
      if (p.err && p.err > 0) {
        const y1 = fmt(sy(Math.min(Math.max(p.y - p.err, ylo), yhi)));
        const y2 = fmt(sy(Math.min(Math.max(p.y + p.err, ylo), yhi)));
        body.push(`<line x1="${px}" y1="${y1}" x2="${px}" y2="${y2}" stroke="${color}" stroke-width="1"/>`);
      }
    }
    const lx = (opts.width ?? 640) - MARGIN.right - 150;
    const ly = MARGIN.top + 14 + i * 16;
    body.push(`<line x1="${lx}" y1="${ly - 4}" x2="${lx + 22}" y2="${ly - 4}" stroke="${color}" stroke-width="2"/>`);
    body.push(`<text x="${lx + 28}" y="${ly}" font-size="11">${s.label}</text>`);
  });
  return wrap(w, h, body);
}

export interface Bar {
  label: string;
  value: number;
  err?: number;
}

export function barChart(opts: AxesOptions, bars: Bar[]): string {
  if (bars.length === 0) {
    throw new Error(`chart "${opts.title}": no bars`);
  }
  const w = opts.width ?? 640;
  const h = opts.height ?? 420;
  const ylo = opts.yMin ?? 0;
  let yhi = opts.yMax ?? Math.max(...bars.map((b) => b.value + (b.err ?? 0))) * 1.1;
  if (yhi <= ylo) yhi = ylo + 1;
  const { body, sy } = frame({ ...opts, width: w, height: h }, 0, bars.length, ylo, yhi);
  const iw = w - MARGIN.left - MARGIN.right;
  const bw = iw / bars.length;
  bars.forEach((b, i) => {
    const x = MARGIN.left + i * bw + bw * 0.15;
    const y = sy(Math.min(Math.max(b.value, ylo), yhi));
    const y0 = sy(ylo);
    body.push(`<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(bw * 0.7)}" height="${fmt(y0 - y)}" fill="${PALETTE[1]}" stroke="#333" stroke-width="0.5"/>`);
    if (b.err && b.err > 0) {
      const cx = fmt(x + bw * 0.35);
      body.push(`<line x1="${cx}" y1="${fmt(sy(Math.min(b.value + b.err, yhi)))}" x2="${cx}" y2="${fmt(sy(Math.max(b.value - b.err, ylo)))}" stroke="#333" stroke-width="1"/>`);
    }
    body.push(`<text x="${fmt(x + bw * 0.35)}" y="${fmt(sy(ylo) + 18)}" font-size="11" text-anchor="middle">${b.label}</text>`);
  });
  return wrap(w, h, body);
}

export interface DensityPanel {
  title: string;
  // step density: pairs of (left edge, density); right edge implied by next
  steps: { left: number; right: number; density: number }[];
}

export function densityPanels(opts: { title: string; xLabel: string;
                                      yLabel: string }, panels: DensityPanel[],
                              width = 960, height = 420): string {
  if (panels.length === 0) throw new Error("density chart: no panels");
  const body: string[] = [];
  const panelW = Math.floor(width / panels.length);
  panels.forEach((panel, pi) => {
    const xs = panel.steps.flatMap((s) => [s.left, s.right]);
    const ds = panel.steps.map((s) => s.density);
    const xlo = 0;
    const xhi = Math.max(...xs, 0.1);
    const yhi = Math.max(...ds) * 1.1 || 1;
    const sub = frame({ title: panel.title, xLabel: opts.xLabel,
                        yLabel: pi === 0 ? opts.yLabel : "",
                        width: panelW, height }, xlo, xhi, 0, yhi);
    const shift = pi * panelW;
    const pts: string[] = [];
    for (const s of panel.steps) {
      pts.push(`${fmt(sub.sx(s.left))},${fmt(sub.sy(s.density))}`);
      pts.push(`${fmt(sub.sx(s.right))},${fmt(sub.sy(s.density))}`);
    }
    const base = `${fmt(sub.sx(xhi))},${fmt(sub.sy(0))} ${fmt(sub.sx(xlo))},${fmt(sub.sy(0))}`;
    body.push(`<g transform="translate(${shift} 0)">`);
    body.push(...sub.body);
    body.push(`<polygon points="${pts.join(" ")} ${base}" fill="${PALETTE[1]}" fill-opacity="0.35" stroke="${PALETTE[1]}" stroke-width="1.5"/>`);
    body.push(`</g>`);
  });
  body.push(`<text x="${fmt(width / 2)}" y="${height - 2}" font-size="11" text-anchor="middle">${opts.title}</text>`);
  return wrap(width, height, body);
}
