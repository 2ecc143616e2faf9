#!/usr/bin/env node
/**
 * make-figure <id> --data <dir> [--out <dir>]
 *
 * Renders one bundled figure recipe from experiment CSV directories under
 * <data dir>.  `make-figure list` shows the recipes and the inputs each
 * one expects.  Exits 1 on usage errors, 2 when inputs are missing or
 * fail the schema check.
 */

import { mkdirSync } from "node:fs";
import { parseArgs } from "node:util";

import { SchemaError } from "./csv.js";
import { findRecipe, RECIPES } from "./recipes.js";

export function main(argv: string[]): number {
  let parsed;
  try {
    parsed = parseArgs({
      args: argv,
      allowPositionals: true,
      options: {
        data: { type: "string" },
        out: { type: "string", default: "." },
      },
    });
  } catch (err) {
    console.error((err as Error).message);
    return 1;
  }
  const [id] = parsed.positionals;
  if (id === "list") {
    for (const r of RECIPES) {
      console.log(`${r.id}  ${r.description}`);
      for (const input of r.inputs) console.log(`    needs ${input}`);
    }
    return 0;
  }
  if (id === undefined || parsed.values.data === undefined) {
    console.error("usage: make-figure <id> --data <dir> [--out <dir>] | make-figure list");
    return 1;
  }
  let recipe;
  try {
    recipe = findRecipe(id);
  } catch (err) {
    console.error((err as Error).message);
    return 1;
  }
  mkdirSync(parsed.values.out!, { recursive: true });
  try {
    const written = recipe.render({
      dataDir: parsed.values.data,
      outDir: parsed.values.out!,
    });
    for (const path of written) console.log(path);
  } catch (err) {
    if (err instanceof SchemaError) {
      console.error(err.message);
      return 2;
    }
    throw err;
  }
  return 0;
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url.endsWith(process.argv[1].split("/").pop()!);
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
