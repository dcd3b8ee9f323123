/** FigureSpec validation and the render dispatcher. */

import { existsSync, mkdirSync, writeFileSync } from "fs";
import { dirname } from "path";

import { MissingInput, SchemaMismatch } from "./csv.js";
import {
  Rendered, renderConvergence, renderErrorMap, renderFieldSnapshot, renderTrace,
} from "./figures.js";

export const KINDS = ["field-snapshot", "error-map", "convergence", "trace"] as const;
export type FigureKind = (typeof KINDS)[number];

export interface FigureSpec {
  kind: FigureKind;
  input: string;
  output: string;
  title?: string;
}

const ALLOWED_KEYS = new Set(["kind", "input", "output", "title"]);

export function validateSpec(raw: unknown): FigureSpec {
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    throw new SchemaMismatch("figure spec must be a JSON object");
  }
  const obj = raw as Record<string, unknown>;
  for (const key of Object.keys(obj)) {
    if (!ALLOWED_KEYS.has(key)) {
      throw new SchemaMismatch(`unknown figure spec key: ${key}`);
    }
  }
  const kind = obj.kind;
  if (typeof kind !== "string" || !KINDS.includes(kind as FigureKind)) {
    throw new SchemaMismatch(`figure kind must be one of ${KINDS.join(", ")}`);
  }
  if (typeof obj.input !== "string" || typeof obj.output !== "string") {
    throw new SchemaMismatch("figure spec needs string 'input' and 'output'");
  }
  if (!existsSync(obj.input)) {
    throw new MissingInput(`input does not exist: ${obj.input}`);
  }
  return {
    kind: kind as FigureKind,
    input: obj.input,
    output: obj.output,
    title: typeof obj.title === "string" ? obj.title : undefined,
  };
}

export function render(spec: FigureSpec): Rendered {
  let out: Rendered;
  switch (spec.kind) {
    case "field-snapshot":
      out = renderFieldSnapshot(spec.input, spec.title);
      break;
    case "error-map":
      out = renderErrorMap(spec.input, spec.title);
      break;
    case "convergence":
      out = renderConvergence(spec.input, spec.title);
      break;
    case "trace":
      out = renderTrace(spec.input, spec.title);
      break;
  }
  mkdirSync(dirname(spec.output), { recursive: true });
  writeFileSync(spec.output, out.svg, "utf-8");
  return out;
}
