/**
 * Typed readers for the calibration pipeline's CSV artifacts.
 *
 * The frontend consumes the pipeline exclusively through these files; no
 * Python interop. All readers parse with papaparse in strict header mode
 * and validate the columns they rely on.
 */

import { readFileSync, readdirSync } from "node:fs";
import { join } from "node:path";
import Papa from "papaparse";

export interface SummaryRow {
  individual: number | null;
  parameter: string;
  mean: number;
  sd: number;
  lo: number; // q2.5
  hi: number; // q97.5
  truth: number | null;
  rhat: number;
  ess: number;
  covered: number | null;
}

export interface PredictionRow {
  individual: number;
  block: string;
  x: number;
  mean: number;
  lo: number;
  hi: number;
  region: "interp" | "extrap";
}

export interface WaveformRow {
  individual: number;
  t: number;
  pressureGenerating: number; // three-element simulator output
  pressureFitted: number; // two-element model at the equivalent parameters
}

export interface SamplesTable {
  columns: string[]; // parameter columns (chain/draw stripped)
  draws: Map<string, number[]>;
}

function parseFile(path: string): Record<string, string>[] {
  const text = readFileSync(path, "utf8");
  const out = Papa.parse<Record<string, string>>(text.trim(), {
    header: true,
    skipEmptyLines: true,
  });
  if (out.errors.length > 0) {
    throw new Error(`${path}: ${out.errors[0].message}`);
  }
  return out.data;
}

function need(row: Record<string, string>, col: string, path: string): string {
  const v = row[col];
  if (v === undefined) throw new Error(`${path}: missing column '${col}'`);
  return v;
}

function num(raw: string, path: string): number {
  const v = Number(raw);
  if (!Number.isFinite(v)) throw new Error(`${path}: non-numeric '${raw}'`);
  return v;
}

function numOrNull(raw: string, path: string): number | null {
  return raw === "" ? null : num(raw, path);
}

export function readSummary(path: string): SummaryRow[] {
  return parseFile(path).map((r) => ({
    individual: numOrNull(need(r, "individual", path), path),
    parameter: need(r, "parameter", path),
    mean: num(need(r, "mean", path), path),
    sd: num(need(r, "sd", path), path),
    lo: num(need(r, "q2.5", path), path),
    hi: num(need(r, "q97.5", path), path),
    truth: numOrNull(need(r, "truth", path), path),
    rhat: num(need(r, "rhat", path), path),
    ess: num(need(r, "ess", path), path),
    covered: numOrNull(need(r, "covered", path), path),
  }));
}

export function readPredictions(path: string): PredictionRow[] {
  return parseFile(path).map((r) => {
    const region = need(r, "region", path);
    if (region !== "interp" && region !== "extrap") {
      throw new Error(`${path}: unknown region '${region}'`);
    }
    return {
      individual: num(need(r, "individual", path), path),
      block: need(r, "block", path),
      x: num(need(r, "x", path), path),
      mean: num(need(r, "mean", path), path),
      lo: num(need(r, "q2.5", path), path),
      hi: num(need(r, "q97.5", path), path),
      region,
    };
  });
}

export function readWaveforms(path: string): WaveformRow[] {
  return parseFile(path).map((r) => ({
    individual: num(need(r, "individual", path), path),
    t: num(need(r, "t", path), path),
    pressureGenerating: num(need(r, "pressure_wk3", path), path),
    pressureFitted: num(need(r, "pressure_wk2", path), path),
  }));
}

export function readSamples(path: string): SamplesTable {
  const rows = parseFile(path);
  if (rows.length === 0) throw new Error(`${path}: empty samples file`);
  const columns = Object.keys(rows[0]).filter(
    (c) => c !== "chain" && c !== "draw",
  );
  const draws = new Map<string, number[]>(columns.map((c) => [c, []]));
  for (const r of rows) {
    for (const c of columns) {
      draws.get(c)!.push(num(need(r, c, path), path));
    }
  }
  return { columns, draws };
}

/** Variant names present in a run directory, from its summary files. */
export function listVariants(dir: string): string[] {
  return readdirSync(dir)
    .filter((f) => f.startsWith("summary_") && f.endsWith(".csv"))
    .map((f) => f.slice("summary_".length, -".csv".length))
    .sort();
}

export function summaryPath(dir: string, variant: string): string {
  return join(dir, `summary_${variant}.csv`);
}
