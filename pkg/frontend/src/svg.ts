/** Minimal SVG assembly: elements as strings, linear scales, axes. */

export interface Margin {
  top: number;
  right: number;
  bottom: number;
  left: number;
}

export const DEFAULT_MARGIN: Margin = { top: 30, right: 20, bottom: 40, left: 55 };

export function esc(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function el(
  tag: string,
  attrs: Record<string, string | number>,
  children: string[] = [],
  text?: string,
): string {
  const a = Object.entries(attrs)
    .map(([k, v]) => `${k}="${typeof v === "number" ? fmt(v) : esc(v)}"`)
    .join(" ");
  const open = a.length > 0 ? `<${tag} ${a}>` : `<${tag}>`;
  const body = text !== undefined ? esc(text) : children.join("");
  return `${open}${body}</${tag}>`;
}

function fmt(v: number): string {
  return Number.isInteger(v) ? String(v) : v.toFixed(2);
}

export interface Scale {
  (v: number): number;
  domain: [number, number];
  range: [number, number];
}

export function linearScale(
  domain: [number, number],
  range: [number, number],
): Scale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 || 1;
  const f = ((v: number) => r0 + ((v - d0) / span) * (r1 - r0)) as Scale;
  f.domain = domain;
  f.range = range;
  return f;
}

export function extent(values: number[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (!Number.isFinite(lo)) throw new Error("extent of empty/non-finite data");
  if (lo === hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  return [lo, hi];
}

export function pad([lo, hi]: [number, number], frac = 0.05): [number, number] {
  const p = (hi - lo) * frac;
  return [lo - p, hi + p];
}

export function ticks([lo, hi]: [number, number], count = 5): number[] {
  const rawStep = (hi - lo) / Math.max(count, 1);
  const mag = Math.pow(10, Math.floor(Math.log10(rawStep)));
  const step = [1, 2, 5, 10].map((m) => m * mag).find((s) => s >= rawStep)!;
  const out: number[] = [];
  for (let t = Math.ceil(lo / step) * step; t <= hi + 1e-12; t += step) {
    out.push(Number(t.toPrecision(12)));
  }
  return out;
}

export function tickLabel(v: number): string {
  const a = Math.abs(v);
  if (a !== 0 && (a < 0.01 || a >= 10000)) return v.toExponential(1);
  return String(Number(v.toPrecision(6)));
}

export function xAxis(scale: Scale, y: number, label?: string): string {
  const parts = [
    el("line", {
      x1: scale.range[0],
      x2: scale.range[1],
      y1: y,
      y2: y,
      stroke: "#333",
    }),
  ];
  for (const t of ticks(scale.domain)) {
    parts.push(
      el("line", { x1: scale(t), x2: scale(t), y1: y, y2: y + 4, stroke: "#333" }),
      el(
        "text",
        { x: scale(t), y: y + 16, "text-anchor": "middle", "font-size": 10 },
        [],
        tickLabel(t),
      ),
    );
  }
  if (label) {
    const mid = (scale.range[0] + scale.range[1]) / 2;
    parts.push(
      el(
        "text",
        { x: mid, y: y + 32, "text-anchor": "middle", "font-size": 11 },
        [],
        label,
      ),
    );
  }
  return el("g", { class: "x-axis" }, parts);
}

export function yAxis(scale: Scale, x: number, label?: string): string {
  const parts = [
    el("line", {
      x1: x,
      x2: x,
      y1: scale.range[0],
      y2: scale.range[1],
      stroke: "#333",
    }),
  ];
  for (const t of ticks(scale.domain)) {
    parts.push(
      el("line", { x1: x - 4, x2: x, y1: scale(t), y2: scale(t), stroke: "#333" }),
      el(
        "text",
        {
          x: x - 6,
          y: scale(t) + 3,
          "text-anchor": "end",
          "font-size": 10,
        },
        [],
        tickLabel(t),
      ),
    );
  }
  if (label) {
    const mid = (scale.range[0] + scale.range[1]) / 2;
    parts.push(
      el(
        "text",
        {
          x: x - 40,
          y: mid,
          "text-anchor": "middle",
          "font-size": 11,
          transform: `rotate(-90 ${x - 40} ${mid})`,
        },
        [],
        label,
      ),
    );
  }
  return el("g", { class: "y-axis" }, parts);
}

export function polyline(
  pts: Array<[number, number]>,
  attrs: Record<string, string | number>,
): string {
  const points = pts.map(([x, y]) => `${x.toFixed(2)},${y.toFixed(2)}`).join(" ");
  return el("polyline", { points, fill: "none", ...attrs });
}

export function polygon(
  pts: Array<[number, number]>,
  attrs: Record<string, string | number>,
): string {
  const points = pts.map(([x, y]) => `${x.toFixed(2)},${y.toFixed(2)}`).join(" ");
  return el("polygon", { points, ...attrs });
}

export function svgDocument(
  width: number,
  height: number,
  title: string,
  children: string[],
): string {
  return (
    `<?xml version="1.0" encoding="UTF-8"?>\n` +
    el(
      "svg",
      {
        xmlns: "http://www.w3.org/2000/svg",
        width,
        height,
        viewBox: `0 0 ${width} ${height}`,
        "font-family": "sans-serif",
      },
      [
        el(
          "text",
          { x: width / 2, y: 16, "text-anchor": "middle", "font-size": 13 },
          [],
          title,
        ),
        ...children,
      ],
    )
  );
}

export const VARIANT_COLORS: Record<string, string> = {
  no_delta: "#888888",
  indep_delta: "#d62728",
  common_delta: "#1f77b4",
  shared_delta: "#2ca02c",
};

export function variantColor(variant: string): string {
  return VARIANT_COLORS[variant] ?? "#9467bd";
}
