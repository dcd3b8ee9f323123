/**
 * The four figure kinds rendered from run artifacts.
 *
 * Every renderer is a pure function of its input files and returns the SVG
 * text together with the raw annotation values it printed, so fidelity
 * against the run's JSON report can be asserted exactly.
 */

import { FieldData, readFieldCsv, readTable, SchemaMismatch } from "./csv.js";
import {
  annotation, axes, close, decadeTicks, esc, fmt, heatColor, HEIGHT, linScale,
  logScale, MARGIN, niceTicks, open, WIDTH,
} from "./svg.js";

export interface Rendered {
  svg: string;
  annotations: Record<string, number>;
}

const PLOT_X0 = MARGIN.left;
const PLOT_X1 = WIDTH - MARGIN.right;
const PLOT_Y0 = HEIGHT - MARGIN.bottom;
const PLOT_Y1 = MARGIN.top;

function magnitude(field: FieldData): number[] {
  const m = field.components.length;
  const out = new Array<number>(field.components[0].length);
  for (let i = 0; i < out.length; i++) {
    let sq = 0;
    for (let a = 0; a < m; a++) sq += field.components[a][i] ** 2;
    out[i] = Math.sqrt(sq);
  }
  return out;
}

function heatmap(field: FieldData, values: number[], vmax: number): string {
  const n = field.n;
  const w = (PLOT_X1 - PLOT_X0) / n;
  const h = (PLOT_Y0 - PLOT_Y1) / n;
  let s = "";
  for (let i = 0; i < n; i++) {
    for (let j = 0; j < n; j++) {
      const v = values[i * n + j];
      const px = PLOT_X0 + i * w;
      const py = PLOT_Y0 - (j + 1) * h;
      s += `<rect x="${px.toFixed(2)}" y="${py.toFixed(2)}" width="${(w + 0.1).toFixed(2)}" ` +
        `height="${(h + 0.1).toFixed(2)}" fill="${heatColor(vmax > 0 ? v / vmax : 0)}"/>\n`;
    }
  }
  return s;
}

function spatialAxes(field: FieldData): string {
  const L = field.extent;
  const xs = linScale(-L, L, PLOT_X0, PLOT_X1);
  const ys = linScale(-L, L, PLOT_Y0, PLOT_Y1);
  return axes(xs, ys, niceTicks(-L, L, 5), niceTicks(-L, L, 5), "x1", "x2",
    (v) => v.toFixed(1), (v) => v.toFixed(1));
}

export function renderFieldSnapshot(input: string, title?: string): Rendered {
  const field = readFieldCsv(input);
  if (field.dim !== 2) {
    throw new SchemaMismatch(`${input}: field snapshots need dim = 2, got ${field.dim}`);
  }
  const mag = magnitude(field);
  const vmax = Math.max(...mag);
  let s = open(title ?? `field ${field.name || input} (t=${fmt(field.t, 3)})`);
  s += heatmap(field, mag, vmax);
  // quiver arrows on a coarse sublattice for vector fields
  if (field.components.length >= 2 && vmax > 0) {
    const n = field.n;
    const stride = Math.max(1, Math.floor(n / 16));
    const w = (PLOT_X1 - PLOT_X0) / n;
    const h = (PLOT_Y0 - PLOT_Y1) / n;
    const scale = (Math.min(w, h) * stride * 0.8) / vmax;
    for (let i = 0; i < n; i += stride) {
      for (let j = 0; j < n; j += stride) {
        const u = field.components[0][i * n + j];
        const v = field.components[1][i * n + j];
        const cx = PLOT_X0 + (i + 0.5) * w;
        const cy = PLOT_Y0 - (j + 0.5) * h;
        s += `<line x1="${cx.toFixed(2)}" y1="${cy.toFixed(2)}" ` +
          `x2="${(cx + u * scale).toFixed(2)}" y2="${(cy - v * scale).toFixed(2)}" ` +
          `stroke="#111" stroke-width="0.7"/>\n`;
      }
    }
  }
  s += spatialAxes(field);
  s += annotation([`max |f| = ${fmt(vmax, 6)}`]);
  s += close();
  return { svg: s, annotations: { max_magnitude: vmax } };
}

export function renderErrorMap(input: string, title?: string): Rendered {
  const field = readFieldCsv(input);
  if (field.dim !== 2) {
    throw new SchemaMismatch(`${input}: error maps need dim = 2`);
  }
  // components hold per-component absolute errors; show the max over components
  const count = field.components[0].length;
  const vals = new Array<number>(count);
  let vmax = 0;
  for (let i = 0; i < count; i++) {
    let v = 0;
    for (const comp of field.components) v = Math.max(v, Math.abs(comp[i]));
    vals[i] = v;
    vmax = Math.max(vmax, v);
  }
  let s = open(title ?? `error map ${input}`);
  s += heatmap(field, vals, vmax);
  s += spatialAxes(field);
  s += annotation([`max error = ${fmt(vmax, 6)}`]);
  s += close();
  return { svg: s, annotations: { max_error: vmax } };
}

export function fitLogLogSlope(xs: number[], ys: number[]): number {
  if (xs.length < 2) {
    throw new SchemaMismatch("convergence data needs at least 2 rows");
  }
  if (xs.some((v) => v <= 0) || ys.some((v) => v <= 0)) {
    throw new SchemaMismatch("convergence data must be positive for log-log fit");
  }
  const lx = xs.map(Math.log);
  const ly = ys.map(Math.log);
  const n = lx.length;
  const mx = lx.reduce((a, b) => a + b, 0) / n;
  const my = ly.reduce((a, b) => a + b, 0) / n;
  let num = 0;
  let den = 0;
  for (let i = 0; i < n; i++) {
    num += (lx[i] - mx) * (ly[i] - my);
    den += (lx[i] - mx) ** 2;
  }
  return num / den;
}

export function renderConvergence(input: string, title?: string): Rendered {
  const table = readTable(input);
  const xs = table.rows.map((r) => r[0]);
  const ys = table.rows.map((r) => r[1]);
  const slope = fitLogLogSlope(xs, ys);
  const sx = logScale(Math.min(...xs), Math.max(...xs), PLOT_X0, PLOT_X1);
  const sy = logScale(Math.min(...ys), Math.max(...ys), PLOT_Y0, PLOT_Y1);
  let s = open(title ?? `convergence ${input}`);
  s += axes(sx, sy, decadeTicks(sx.min, sx.max), decadeTicks(sy.min, sy.max),
    table.headers[0], table.headers[1],
    (v) => v.toExponential(0), (v) => v.toExponential(0));
  const pts = table.rows
    .map((r) => `${sx(r[0]).toFixed(2)},${sy(r[1]).toFixed(2)}`)
    .join(" ");
  s += `<polyline points="${pts}" fill="none" stroke="#4361ee" stroke-width="1.6"/>\n`;
  for (const r of table.rows) {
    s += `<circle cx="${sx(r[0]).toFixed(2)}" cy="${sy(r[1]).toFixed(2)}" r="3" fill="#4361ee"/>\n`;
  }
  s += annotation([`fitted slope = ${slope.toFixed(2)}`]);
  s += close();
  return { svg: s, annotations: { slope } };
}

export function renderTrace(input: string, title?: string): Rendered {
  const table = readTable(input);
  const ts = table.rows.map((r) => r[0]);
  const seriesCount = table.headers.length - 1;
  const allVals = table.rows.flatMap((r) => r.slice(1));
  const sx = linScale(Math.min(...ts), Math.max(...ts), PLOT_X0, PLOT_X1);
  const sy = linScale(Math.min(...allVals, 0), Math.max(...allVals), PLOT_Y0, PLOT_Y1);
  const colors = ["#4361ee", "#e63946", "#2d6a4f", "#b5179e"];
  let s = open(title ?? `trace ${input}`);
  s += axes(sx, sy, niceTicks(sx.min, sx.max), niceTicks(sy.min, sy.max),
    table.headers[0], "value");
  const finals: Record<string, number> = {};
  const legends: string[] = [];
  for (let c = 0; c < seriesCount; c++) {
    const pts = table.rows
      .map((r) => `${sx(r[0]).toFixed(2)},${sy(r[c + 1]).toFixed(2)}`)
      .join(" ");
    s += `<polyline points="${pts}" fill="none" stroke="${colors[c % colors.length]}" stroke-width="1.4"/>\n`;
    const name = table.headers[c + 1];
    const last = table.rows[table.rows.length - 1][c + 1];
    finals[`final_${name}`] = last;
    legends.push(`${name}: ${fmt(last, 5)}`);
  }
  s += annotation(legends);
  s += close();
  return { svg: s, annotations: finals };
}
