/**
 * Figure generators. Each returns a standalone SVG document string built
 * from parsed CSV rows; nothing here touches the filesystem.
 */

import type {
  PredictionRow,
  SamplesTable,
  SummaryRow,
  WaveformRow,
} from "./csv.js";
import {
  DEFAULT_MARGIN,
  el,
  extent,
  linearScale,
  pad,
  polygon,
  polyline,
  svgDocument,
  variantColor,
  xAxis,
  yAxis,
} from "./svg.js";

export interface CiPanelInput {
  /** variant name -> summary rows of that variant */
  summaries: Map<string, SummaryRow[]>;
  /** which per-individual parameter to plot (e.g. "u", "R", "C") */
  parameter: string;
}

/**
 * Credible-interval panel: one vertical 95% interval per individual and
 * variant, with posterior means and true values. Interval lines carry
 * class="interval" so their count is machine-checkable.
 */
export function ciPanel(input: CiPanelInput): string {
  const { summaries, parameter } = input;
  const variants = [...summaries.keys()];
  if (variants.length === 0) throw new Error("ciPanel: no variants");

  const perVariant = new Map<string, SummaryRow[]>();
  for (const [variant, rows] of summaries) {
    const sel = rows
      .filter((r) => r.parameter === parameter && r.individual !== null)
      .sort((a, b) => a.individual! - b.individual!);
    if (sel.length === 0) {
      throw new Error(`ciPanel: no rows for parameter '${parameter}' in ${variant}`);
    }
    perVariant.set(variant, sel);
  }
  const individuals = perVariant.get(variants[0])!.map((r) => r.individual!);

  const width = Math.max(480, 60 * individuals.length + 160);
  const height = 340;
  const m = DEFAULT_MARGIN;
  const x = linearScale(
    [0.5, individuals.length + 0.5],
    [m.left, width - m.right - 110],
  );
  const all = [...perVariant.values()].flat();
  const yVals = all.flatMap((r) => [r.lo, r.hi, r.truth ?? r.mean]);
  const y = linearScale(pad(extent(yVals)), [height - m.bottom, m.top]);

  const children: string[] = [];
  const slot = (ind: number, vi: number) =>
    x(ind) + (vi - (variants.length - 1) / 2) * 9;

  for (const [vi, variant] of variants.entries()) {
    const color = variantColor(variant);
    for (const r of perVariant.get(variant)!) {
      const cx = slot(individuals.indexOf(r.individual!) + 1, vi);
      children.push(
        el("line", {
          class: "interval",
          "data-variant": variant,
          "data-individual": r.individual!,
          x1: cx,
          x2: cx,
          y1: y(r.lo),
          y2: y(r.hi),
          stroke: color,
          "stroke-width": 2.5,
        }),
        el("circle", { class: "posterior-mean", cx, cy: y(r.mean), r: 2.5, fill: color }),
      );
    }
  }
  // truth markers drawn once per individual
  for (const [i, r] of perVariant.get(variants[0])!.entries()) {
    if (r.truth === null) continue;
    const cx = x(i + 1);
    children.push(
      el("line", {
        class: "truth",
        x1: cx - 14,
        x2: cx + 14,
        y1: y(r.truth),
        y2: y(r.truth),
        stroke: "#000",
        "stroke-dasharray": "3,2",
      }),
    );
  }
  // x labels (individual ids)
  for (const [i, ind] of individuals.entries()) {
    children.push(
      el(
        "text",
        { x: x(i + 1), y: height - m.bottom + 16, "text-anchor": "middle", "font-size": 10 },
        [],
        String(ind),
      ),
    );
  }
  children.push(
    el(
      "text",
      {
        x: (x.range[0] + x.range[1]) / 2,
        y: height - 8,
        "text-anchor": "middle",
        "font-size": 11,
      },
      [],
      "individual",
    ),
    yAxis(y, m.left - 6, parameter),
    legend(variants, width - m.right - 100, m.top),
  );
  return svgDocument(width, height, `95% credible intervals: ${parameter}`, children);
}

function legend(variants: string[], lx: number, ly: number): string {
  const items = variants.map((v, i) =>
    el("g", { class: "legend-item" }, [
      el("line", {
        x1: lx,
        x2: lx + 18,
        y1: ly + 16 * i,
        y2: ly + 16 * i,
        stroke: variantColor(v),
        "stroke-width": 3,
      }),
      el(
        "text",
        { x: lx + 24, y: ly + 16 * i + 4, "font-size": 10 },
        [],
        v,
      ),
    ]),
  );
  return el("g", { class: "legend" }, items);
}

export interface PosteriorGridInput {
  samples: SamplesTable;
  variant: string;
  /** plot at most this many parameters (column order), default 12 */
  maxPanels?: number;
  bins?: number;
}

/** Small-multiple histograms of posterior draws, one panel per parameter. */
export function posteriorGrid(input: PosteriorGridInput): string {
  const { samples, variant } = input;
  const maxPanels = input.maxPanels ?? 12;
  const bins = input.bins ?? 30;
  const params = samples.columns.slice(0, maxPanels);
  if (params.length === 0) throw new Error("posteriorGrid: no parameters");

  const cols = Math.min(4, params.length);
  const rows = Math.ceil(params.length / cols);
  const pw = 170;
  const ph = 130;
  const width = cols * pw + 30;
  const height = rows * ph + 40;
  const color = variantColor(variant);

  const panels = params.map((p, i) => {
    const draws = samples.draws.get(p)!;
    const [lo, hi] = extent(draws);
    const counts = new Array<number>(bins).fill(0);
    for (const v of draws) {
      const b = Math.min(bins - 1, Math.floor(((v - lo) / (hi - lo)) * bins));
      counts[b] += 1;
    }
    const peak = Math.max(...counts);
    const ox = (i % cols) * pw + 40;
    const oy = Math.floor(i / cols) * ph + 30;
    const x = linearScale([lo, hi], [ox, ox + pw - 30]);
    const y = linearScale([0, peak], [oy + ph - 35, oy]);
    const bars = counts.map((c, b) => {
      const x0 = x(lo + ((hi - lo) * b) / bins);
      const x1 = x(lo + ((hi - lo) * (b + 1)) / bins);
      return el("rect", {
        class: "hist-bar",
        x: x0,
        y: y(c),
        width: Math.max(x1 - x0 - 0.5, 0.5),
        height: y(0) - y(c),
        fill: color,
        "fill-opacity": 0.7,
      });
    });
    return el("g", { class: "panel", "data-parameter": p }, [
      ...bars,
      xAxis(x, y(0)),
      el(
        "text",
        { x: ox + (pw - 30) / 2, y: oy - 6, "text-anchor": "middle", "font-size": 11 },
        [],
        p,
      ),
    ]);
  });
  return svgDocument(width, height, `posterior draws: ${variant}`, panels);
}

export interface PredictionBandsInput {
  predictions: PredictionRow[];
  variant: string;
  block?: string; // default "u"
  /** observation block label for the y axis */
  yLabel?: string;
}

/**
 * Posterior predictive bands per individual: shaded 95% band, mean line,
 * and a divider between interpolation and extrapolation regions.
 */
export function predictionBands(input: PredictionBandsInput): string {
  const block = input.block ?? "u";
  const rows = input.predictions.filter((r) => r.block === block);
  if (rows.length === 0) {
    throw new Error(`predictionBands: no rows for block '${block}'`);
  }
  const individuals = [...new Set(rows.map((r) => r.individual))].sort(
    (a, b) => a - b,
  );
  const cols = Math.min(3, individuals.length);
  const nRows = Math.ceil(individuals.length / cols);
  const pw = 230;
  const ph = 170;
  const width = cols * pw + 40;
  const height = nRows * ph + 40;
  const color = variantColor(input.variant);

  const panels = individuals.map((ind, i) => {
    const sel = rows
      .filter((r) => r.individual === ind)
      .sort((a, b) => a.x - b.x);
    const ox = (i % cols) * pw + 50;
    const oy = Math.floor(i / cols) * ph + 30;
    const x = linearScale(extent(sel.map((r) => r.x)), [ox, ox + pw - 40]);
    const y = linearScale(
      pad(extent(sel.flatMap((r) => [r.lo, r.hi]))),
      [oy + ph - 45, oy],
    );
    const band = polygon(
      [
        ...sel.map((r) => [x(r.x), y(r.hi)] as [number, number]),
        ...[...sel].reverse().map((r) => [x(r.x), y(r.lo)] as [number, number]),
      ],
      { class: "band", fill: color, "fill-opacity": 0.25 },
    );
    const meanLine = polyline(
      sel.map((r) => [x(r.x), y(r.mean)]),
      { class: "mean-line", stroke: color, "stroke-width": 1.5 },
    );
    const parts = [band, meanLine];
    const firstExtrap = sel.find((r) => r.region === "extrap");
    if (firstExtrap) {
      parts.push(
        el("line", {
          class: "extrapolation-divider",
          x1: x(firstExtrap.x),
          x2: x(firstExtrap.x),
          y1: oy,
          y2: oy + ph - 45,
          stroke: "#999",
          "stroke-dasharray": "4,3",
        }),
      );
    }
    parts.push(
      xAxis(x, oy + ph - 45),
      yAxis(y, ox - 4),
      el(
        "text",
        { x: ox + (pw - 40) / 2, y: oy - 6, "text-anchor": "middle", "font-size": 11 },
        [],
        `individual ${ind}`,
      ),
    );
    return el("g", { class: "panel", "data-individual": ind }, parts);
  });
  return svgDocument(
    width,
    height,
    `posterior predictive (${input.variant}, ${input.yLabel ?? block} block)`,
    panels,
  );
}

export interface WaveformOverlayInput {
  waveforms: WaveformRow[];
}

/**
 * Per-individual overlay of the generating (three-element) pressure trace
 * and the fitted-form (two-element) trace at the equivalent parameters;
 * the gap between them is the structural model discrepancy.
 */
export function waveformOverlay(input: WaveformOverlayInput): string {
  const rows = input.waveforms;
  if (rows.length === 0) throw new Error("waveformOverlay: no rows");
  const individuals = [...new Set(rows.map((r) => r.individual))].sort(
    (a, b) => a - b,
  );
  const cols = Math.min(3, individuals.length);
  const nRows = Math.ceil(individuals.length / cols);
  const pw = 230;
  const ph = 170;
  const width = cols * pw + 40;
  const height = nRows * ph + 60;

  const panels = individuals.map((ind, i) => {
    const sel = rows
      .filter((r) => r.individual === ind)
      .sort((a, b) => a.t - b.t);
    const ox = (i % cols) * pw + 50;
    const oy = Math.floor(i / cols) * ph + 30;
    const x = linearScale(extent(sel.map((r) => r.t)), [ox, ox + pw - 40]);
    const y = linearScale(
      pad(
        extent(sel.flatMap((r) => [r.pressureGenerating, r.pressureFitted])),
      ),
      [oy + ph - 45, oy],
    );
    return el("g", { class: "panel", "data-individual": ind }, [
      polyline(
        sel.map((r) => [x(r.t), y(r.pressureGenerating)]),
        { class: "trace-generating", stroke: "#d62728", "stroke-width": 1.5 },
      ),
      polyline(
        sel.map((r) => [x(r.t), y(r.pressureFitted)]),
        {
          class: "trace-fitted",
          stroke: "#1f77b4",
          "stroke-width": 1.5,
          "stroke-dasharray": "5,3",
        },
      ),
      xAxis(x, oy + ph - 45),
      yAxis(y, ox - 4),
      el(
        "text",
        { x: ox + (pw - 40) / 2, y: oy - 6, "text-anchor": "middle", "font-size": 11 },
        [],
        `individual ${ind}`,
      ),
    ]);
  });
  panels.push(
    el("g", { class: "legend" }, [
      el("line", { x1: 50, x2: 70, y1: height - 20, y2: height - 20, stroke: "#d62728", "stroke-width": 2 }),
      el("text", { x: 76, y: height - 16, "font-size": 10 }, [], "generating model (three-element)"),
      el("line", { x1: 280, x2: 300, y1: height - 20, y2: height - 20, stroke: "#1f77b4", "stroke-width": 2, "stroke-dasharray": "5,3" }),
      el("text", { x: 306, y: height - 16, "font-size": 10 }, [], "fitted form (two-element)"),
    ]),
  );
  return svgDocument(width, height, "pressure traces: generating vs fitted form", panels);
}
