#!/usr/bin/env node
/**
 * plots render --spec FILE      render one figure from a FigureSpec JSON
 * plots all --run DIR           render every recognized artifact in a run dir
 *
 * Exit codes: 0 ok, 1 bad arguments/spec, 2 missing input, 3 schema mismatch.
 */

import { existsSync, readdirSync, readFileSync } from "fs";
import { join } from "path";

import { MissingInput, SchemaMismatch } from "./csv.js";
import { FigureKind, render, validateSpec } from "./spec.js";

function renderSpecFile(path: string): number {
  const spec = validateSpec(JSON.parse(readFileSync(path, "utf-8")));
  const out = render(spec);
  const ann = Object.entries(out.annotations)
    .map(([k, v]) => `${k}=${v}`)
    .join(" ");
  console.log(`${spec.output}: ${ann}`);
  return 0;
}

const RUN_ARTIFACTS: Array<{ file: string; kind: FigureKind }> = [
  { file: "V_mc.csv", kind: "field-snapshot" },
  { file: "V_pde.csv", kind: "field-snapshot" },
  { file: "u_mc.csv", kind: "field-snapshot" },
  { file: "u_pde.csv", kind: "field-snapshot" },
  { file: "mean_field.csv", kind: "field-snapshot" },
  { file: "V_final.csv", kind: "field-snapshot" },
  { file: "moments_final.csv", kind: "field-snapshot" },
  { file: "error_map.csv", kind: "error-map" },
  { file: "diagnostics.csv", kind: "trace" },
  { file: "convergence.csv", kind: "convergence" },
];

function renderAll(runDir: string): number {
  if (!existsSync(runDir)) {
    throw new MissingInput(`no such run directory: ${runDir}`);
  }
  const present = new Set(readdirSync(runDir));
  const figDir = join(runDir, "figures");
  let count = 0;
  for (const { file, kind } of RUN_ARTIFACTS) {
    if (!present.has(file)) continue;
    const spec = {
      kind,
      input: join(runDir, file),
      output: join(figDir, file.replace(/\.csv$/, ".svg")),
    };
    const out = render(spec);
    const ann = Object.entries(out.annotations)
      .map(([k, v]) => `${k}=${v}`)
      .join(" ");
    console.log(`${spec.output}: ${ann}`);
    count += 1;
  }
  if (count === 0) {
    console.error(`no recognized artifacts in ${runDir}`);
    return 1;
  }
  return 0;
}

export function main(argv: string[]): number {
  try {
    if (argv[0] === "render" && argv[1] === "--spec" && argv[2]) {
      return renderSpecFile(argv[2]);
    }
    if (argv[0] === "all" && argv[1] === "--run" && argv[2]) {
      return renderAll(argv[2]);
    }
    console.error("usage: plots render --spec FILE | plots all --run DIR");
    return 1;
  } catch (err) {
    if (err instanceof MissingInput) {
      console.error(`missing input: ${err.message}`);
      return 2;
    }
    if (err instanceof SchemaMismatch) {
      console.error(`schema mismatch: ${err.message}`);
      return 3;
    }
    throw err;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
