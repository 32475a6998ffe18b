#!/usr/bin/env node
/**
 * Render SVG figures from a calibration run directory.
 *
 *   twincal-figures --dir out/toy --kind ci-panel --param u --out fig.svg
 *   twincal-figures --dir out/cardio --all --out-dir figs/
 */

import { existsSync, mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import {
  listVariants,
  readPredictions,
  readSamples,
  readSummary,
  readWaveforms,
  summaryPath,
} from "./csv.js";
import {
  ciPanel,
  posteriorGrid,
  predictionBands,
  waveformOverlay,
} from "./figures.js";

export const FIGURE_KINDS = [
  "ci-panel",
  "posterior-grid",
  "prediction-bands",
  "waveform-overlay",
] as const;
export type FigureKind = (typeof FIGURE_KINDS)[number];

export interface RenderOptions {
  dir: string;
  kind: FigureKind;
  parameter?: string;
  variant?: string;
  block?: string;
}

function defaultParameter(dir: string): string {
  // toy runs summarize "u"; cardio runs summarize "R"/"C"
  const variants = listVariants(dir);
  if (variants.length === 0) throw new Error(`${dir}: no summary files`);
  const rows = readSummary(summaryPath(dir, variants[0]));
  return rows.some((r) => r.parameter === "u") ? "u" : "R";
}

function pickVariant(dir: string, requested?: string): string {
  const variants = listVariants(dir);
  if (requested) {
    if (!variants.includes(requested)) {
      throw new Error(`${dir}: no summary for variant '${requested}'`);
    }
    return requested;
  }
  // prefer the richest variant present
  for (const v of ["shared_delta", "common_delta", "indep_delta", "no_delta"]) {
    if (variants.includes(v)) return v;
  }
  return variants[0];
}

/** Render one figure kind from a run directory to an SVG string. */
export function render(opts: RenderOptions): string {
  const { dir, kind } = opts;
  switch (kind) {
    case "ci-panel": {
      const parameter = opts.parameter ?? defaultParameter(dir);
      const summaries = new Map(
        listVariants(dir).map((v) => [v, readSummary(summaryPath(dir, v))]),
      );
      return ciPanel({ summaries, parameter });
    }
    case "posterior-grid": {
      const variant = pickVariant(dir, opts.variant);
      const samples = readSamples(join(dir, `samples_${variant}.csv`));
      return posteriorGrid({ samples, variant });
    }
    case "prediction-bands": {
      const variant = pickVariant(dir, opts.variant);
      const predictions = readPredictions(
        join(dir, `predictions_${variant}.csv`),
      );
      return predictionBands({ predictions, variant, block: opts.block });
    }
    case "waveform-overlay": {
      const path = join(dir, "waveforms.csv");
      if (!existsSync(path)) {
        throw new Error(`${dir}: waveforms.csv not found (cardio runs only)`);
      }
      return waveformOverlay({ waveforms: readWaveforms(path) });
    }
  }
}

/** Figure kinds applicable to a run directory. */
export function applicableKinds(dir: string): FigureKind[] {
  const kinds: FigureKind[] = ["ci-panel", "posterior-grid", "prediction-bands"];
  if (existsSync(join(dir, "waveforms.csv"))) kinds.push("waveform-overlay");
  return kinds;
}

export async function main(argv: string[]): Promise<number> {
  const args = await yargs(argv)
    .option("dir", { type: "string", demandOption: true, describe: "run output directory" })
    .option("kind", { type: "string", choices: FIGURE_KINDS as unknown as string[], describe: "figure kind" })
    .option("all", { type: "boolean", default: false, describe: "render every applicable kind" })
    .option("param", { type: "string", describe: "parameter for the CI panel" })
    .option("variant", { type: "string", describe: "variant for single-variant figures" })
    .option("block", { type: "string", describe: "observation block for prediction bands" })
    .option("out", { type: "string", describe: "output SVG file (single kind)" })
    .option("out-dir", { type: "string", describe: "output directory (--all)" })
    .strict()
    .parse();

  try {
    if (args.all) {
      const outDir = (args["out-dir"] as string) ?? ".";
      mkdirSync(outDir, { recursive: true });
      for (const kind of applicableKinds(args.dir)) {
        const svg = render({
          dir: args.dir,
          kind,
          parameter: args.param,
          variant: args.variant,
          block: args.block,
        });
        const path = join(outDir, `${kind}.svg`);
        writeFileSync(path, svg);
        console.log(path);
      }
      return 0;
    }
    if (!args.kind) throw new Error("either --kind or --all is required");
    const svg = render({
      dir: args.dir,
      kind: args.kind as FigureKind,
      parameter: args.param,
      variant: args.variant,
      block: args.block,
    });
    if (args.out) {
      writeFileSync(args.out, svg);
      console.log(args.out);
    } else {
      process.stdout.write(svg);
    }
    return 0;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 2;
  }
}

const isMain =
  process.argv[1] !== undefined &&
  import.meta.url.endsWith(process.argv[1].split("/").pop()!);
if (isMain) {
  main(hideBin(process.argv)).then((code) => {
    process.exitCode = code;
  });
}
