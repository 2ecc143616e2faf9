/**
 * Reader for the experiment CSV dialect: '#'-prefixed metadata lines,
 * one header row, then numeric rows.  Column access is schema-checked so
 * a renamed or missing column fails loudly instead of plotting garbage.
 */

import { readFileSync } from "node:fs";

export interface Table {
  path: string;
  meta: Record<string, string>;
  columns: Map<string, number[]>;
}

export class SchemaError extends Error {
  constructor(message: string) {
    super(`schema: ${message}`);
    this.name = "SchemaError";
  }
}

export function readTable(path: string): Table {
  let text: string;
  try {
    text = readFileSync(path, "utf-8");
  } catch {
    throw new SchemaError(`required input file is missing: ${path}`);
  }
  const meta: Record<string, string> = {};
  const lines = text.split("\n");
  let i = 0;
  for (; i < lines.length && lines[i].startsWith("#"); i++) {
    const body = lines[i].slice(1);
    const sep = body.indexOf(":");
    if (sep >= 0) meta[body.slice(0, sep).trim()] = body.slice(sep + 1).trim();
  }
  if (i >= lines.length || lines[i].trim() === "") {
    throw new SchemaError(`${path} has no header row`);
  }
  const names = lines[i].split(",");
  const columns = new Map<string, number[]>(names.map((n) => [n, []]));
  for (i += 1; i < lines.length; i++) {
    const line = lines[i];
    if (line === "") continue;
    const parts = line.split(",");
    if (parts.length !== names.length) {
      throw new SchemaError(
        `${path} row ${i + 1} has ${parts.length} fields, header has ${names.length}`,
      );
    }
    for (let j = 0; j < names.length; j++) {
      columns.get(names[j])!.push(Number(parts[j]));
    }
  }
  return { path, meta, columns };
}

/** Fetch columns by name; reports every missing name at once. */
export function requireColumns(table: Table, names: string[]): number[][] {
  const missing = names.filter((n) => !table.columns.has(n));
  if (missing.length > 0) {
    const have = [...table.columns.keys()].join(", ");
    throw new SchemaError(
      `${table.path} is missing column(s) ${missing.join(", ")} (has: ${have})`,
    );
  }
  return names.map((n) => table.columns.get(n)!);
}
