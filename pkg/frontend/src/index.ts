export * from "./csv.js";
export * from "./svg.js";
export * from "./figures.js";
export { render, applicableKinds, FIGURE_KINDS } from "./cli.js";
export type { FigureKind, RenderOptions } from "./cli.js";
