import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import {
  listVariants,
  readPredictions,
  readSamples,
  readSummary,
  readWaveforms,
} from "../src/csv.js";

const FIXTURE_TOY = new URL("./fixtures/toy", import.meta.url).pathname;
const FIXTURE_CARDIO = new URL("./fixtures/cardio", import.meta.url).pathname;

describe("readSummary", () => {
  it("parses rows with numeric fields and null blanks", () => {
    const rows = readSummary(join(FIXTURE_TOY, "summary_indep_delta.csv"));
    expect(rows.length).toBeGreaterThan(0);
    const u = rows.filter((r) => r.parameter === "u");
    for (const r of u) {
      expect(r.lo).toBeLessThan(r.hi);
      expect(r.truth).not.toBeNull();
      expect([0, 1]).toContain(r.covered);
    }
  });

  it("rejects files missing required columns", () => {
    const dir = mkdtempSync(join(tmpdir(), "csv-"));
    const bad = join(dir, "summary_x.csv");
    writeFileSync(bad, "a,b\n1,2\n");
    expect(() => readSummary(bad)).toThrow(/missing column/);
  });

  it("rejects non-numeric values", () => {
    const dir = mkdtempSync(join(tmpdir(), "csv-"));
    const bad = join(dir, "summary_x.csv");
    writeFileSync(
      bad,
      "individual,parameter,mean,sd,q2.5,q97.5,truth,rhat,ess,covered\n" +
        "1,u,oops,1,0,1,0.5,1,100,1\n",
    );
    expect(() => readSummary(bad)).toThrow(/non-numeric/);
  });
});

describe("readPredictions", () => {
  it("parses and validates the region column", () => {
    const rows = readPredictions(
      join(FIXTURE_TOY, "predictions_indep_delta.csv"),
    );
    expect(rows.length).toBeGreaterThan(0);
    expect(new Set(rows.map((r) => r.region))).toEqual(
      new Set(["interp", "extrap"]),
    );
  });
});

describe("readSamples", () => {
  it("strips chain/draw and returns equal-length draw arrays", () => {
    const t = readSamples(join(FIXTURE_TOY, "samples_indep_delta.csv"));
    expect(t.columns).not.toContain("chain");
    expect(t.columns).not.toContain("draw");
    const lengths = new Set(
      t.columns.map((c) => t.draws.get(c)!.length),
    );
    expect(lengths.size).toBe(1);
  });
});

describe("readWaveforms", () => {
  it("parses both traces per time point", () => {
    const rows = readWaveforms(join(FIXTURE_CARDIO, "waveforms.csv"));
    expect(rows.length).toBeGreaterThan(0);
    for (const r of rows.slice(0, 10)) {
      expect(r.pressureGenerating).toBeGreaterThan(0);
      expect(r.pressureFitted).toBeGreaterThan(0);
    }
  });
});

describe("listVariants", () => {
  it("discovers variants from summary files", () => {
    const variants = listVariants(FIXTURE_TOY);
    expect(variants).toContain("no_delta");
    expect(variants).toContain("indep_delta");
  });
});
