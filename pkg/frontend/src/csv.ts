/**
 * Readers for the simulation CLI's documented CSV/JSON artifact formats.
 *
 * Field CSVs carry a header `x1,...,xd,f1,...,fm` with one row per grid node
 * in row-major order and a JSON sidecar `{dim, L, n, t, name, seed}` next to
 * them. Diagnostics and convergence tables are plain headered CSVs.
 */

import { existsSync, readFileSync } from "fs";

export class MissingInput extends Error {}
export class SchemaMismatch extends Error {}

export interface FieldData {
  dim: number;
  n: number;
  extent: number;
  t: number;
  name: string;
  /** components[a][i] is component a at flat node index i (row-major). */
  components: number[][];
  coords: number[][];
}

export interface Table {
  headers: string[];
  rows: number[][];
}

export function readTable(path: string): Table {
  if (!existsSync(path)) {
    throw new MissingInput(`no such file: ${path}`);
  }
  const text = readFileSync(path, "utf-8").trim();
  if (text.length === 0) {
    throw new SchemaMismatch(`${path}: empty file`);
  }
  const lines = text.split("\n");
  const headers = lines[0].split(",").map((h) => h.trim());
  if (headers.length < 2 || headers.some((h) => h.length === 0)) {
    throw new SchemaMismatch(`${path}: bad header row`);
  }
  if (lines.length < 2) {
    throw new SchemaMismatch(`${path}: no data rows`);
  }
  const rows: number[][] = [];
  for (let i = 1; i < lines.length; i++) {
    const parts = lines[i].split(",");
    if (parts.length !== headers.length) {
      throw new SchemaMismatch(`${path}: row ${i + 1} has ${parts.length} fields, expected ${headers.length}`);
    }
    const row = parts.map(Number);
    if (row.some((v) => Number.isNaN(v))) {
      throw new SchemaMismatch(`${path}: row ${i + 1} has non-numeric entries`);
    }
    rows.push(row);
  }
  return { headers, rows };
}

function sidecarPath(csvPath: string): string {
  return csvPath.replace(/\.csv$/, ".json");
}

export function readFieldCsv(path: string): FieldData {
  const side = sidecarPath(path);
  if (!existsSync(side)) {
    throw new MissingInput(`missing sidecar: ${side}`);
  }
  const meta = JSON.parse(readFileSync(side, "utf-8"));
  const table = readTable(path);
  const dim = Number(meta.dim);
  const n = Number(meta.n);
  if (!Number.isInteger(dim) || !Number.isInteger(n) || dim < 2) {
    throw new SchemaMismatch(`${side}: bad dim/n`);
  }
  const m = table.headers.length - dim;
  if (m < 1) {
    throw new SchemaMismatch(`${path}: fewer columns than coordinates`);
  }
  for (let i = 0; i < dim; i++) {
    if (table.headers[i] !== `x${i + 1}`) {
      throw new SchemaMismatch(`${path}: expected coordinate header x${i + 1}, got ${table.headers[i]}`);
    }
  }
  for (let a = 0; a < m; a++) {
    if (table.headers[dim + a] !== `f${a + 1}`) {
      throw new SchemaMismatch(`${path}: expected component header f${a + 1}`);
    }
  }
  if (table.rows.length !== Math.pow(n, dim)) {
    throw new SchemaMismatch(`${path}: ${table.rows.length} rows, expected n^d = ${Math.pow(n, dim)}`);
  }
  const components: number[][] = [];
  for (let a = 0; a < m; a++) {
    components.push(table.rows.map((r) => r[dim + a]));
  }
  const coords: number[][] = [];
  for (let i = 0; i < dim; i++) {
    coords.push(table.rows.map((r) => r[i]));
  }
  return {
    dim,
    n,
    extent: Number(meta.L),
    t: Number(meta.t ?? 0),
    name: String(meta.name ?? ""),
    components,
    coords,
  };
}

export function readJson(path: string): Record<string, unknown> {
  if (!existsSync(path)) {
    throw new MissingInput(`no such file: ${path}`);
  }
  return JSON.parse(readFileSync(path, "utf-8"));
}
