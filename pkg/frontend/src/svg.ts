/**
 * Minimal DOM-free SVG chart builder: one cartesian panel with linear or
 * log axes, polylines, scatter points, and a legend.  Output is a plain
 * SVG string, so figures render identically everywhere.
 */

import { scaleLinear, scaleLog, type ScaleContinuousNumeric } from "d3-scale";
import { line as d3line } from "d3-shape";

export interface Series {
  x: number[];
  y: number[];
  label?: string;
  color?: string;
  dash?: string;
  width?: number;
  points?: boolean;
}

export interface PanelSpec {
  title?: string;
  xLabel: string;
  yLabel: string;
  xLog?: boolean;
  yLog?: boolean;
  series: Series[];
}

const PALETTE = ["#1b6ca8", "#d1495b", "#3c8d53", "#8d6a9f", "#c97b2d", "#555555"];
const W = 480;
const H = 360;
const MARGIN = { top: 34, right: 16, bottom: 46, left: 62 };

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function extent(values: number[], log: boolean): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (!Number.isFinite(v)) continue;
    if (log && v <= 0) continue;
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (lo > hi) throw new Error("no finite data to plot");
  if (lo === hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  return [lo, hi];
}

function makeScale(
  domain: [number, number],
  range: [number, number],
  log: boolean,
): ScaleContinuousNumeric<number, number> {
  const s = log ? scaleLog() : scaleLinear();
  return s.domain(domain).range(range).nice();
}

function fmt(v: number): string {
  const a = Math.abs(v);
  if (a !== 0 && (a < 1e-3 || a >= 1e4)) return v.toExponential(0);
  return Number(v.toPrecision(6)).toString();
}

/** Render one panel into an <svg> string. */
export function renderPanel(spec: PanelSpec): string {
  const xs = spec.series.flatMap((s) => s.x);
  const ys = spec.series.flatMap((s) => s.y);
  const x = makeScale(extent(xs, !!spec.xLog), [MARGIN.left, W - MARGIN.right], !!spec.xLog);
  const y = makeScale(extent(ys, !!spec.yLog), [H - MARGIN.bottom, MARGIN.top], !!spec.yLog);

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${W}" height="${H}" ` +
      `viewBox="0 0 ${W} ${H}" font-family="sans-serif" font-size="11">`,
  );
  parts.push(`<rect width="${W}" height="${H}" fill="white"/>`);

  const xTicks = x.ticks(6);
  const yTicks = y.ticks(6);
  for (const t of xTicks) {
    const px = x(t);
    parts.push(
      `<line x1="${px}" y1="${MARGIN.top}" x2="${px}" y2="${H - MARGIN.bottom}" stroke="#eeeeee"/>`,
      `<line x1="${px}" y1="${H - MARGIN.bottom}" x2="${px}" y2="${H - MARGIN.bottom + 4}" stroke="black"/>`,
      `<text x="${px}" y="${H - MARGIN.bottom + 16}" text-anchor="middle">${fmt(t)}</text>`,
    );
  }
  for (const t of yTicks) {
    const py = y(t);
    parts.push(
      `<line x1="${MARGIN.left}" y1="${py}" x2="${W - MARGIN.right}" y2="${py}" stroke="#eeeeee"/>`,
      `<line x1="${MARGIN.left - 4}" y1="${py}" x2="${MARGIN.left}" y2="${py}" stroke="black"/>`,
      `<text x="${MARGIN.left - 7}" y="${py + 3}" text-anchor="end">${fmt(t)}</text>`,
    );
  }
  parts.push(
    `<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${W - MARGIN.left - MARGIN.right}" ` +
      `height="${H - MARGIN.top - MARGIN.bottom}" fill="none" stroke="black"/>`,
  );

  spec.series.forEach((s, i) => {
    const color = s.color ?? PALETTE[i % PALETTE.length];
    const pts: [number, number][] = [];
    for (let j = 0; j < s.x.length; j++) {
      const xv = s.x[j];
      const yv = s.y[j];
      const bad =
        !Number.isFinite(xv) || !Number.isFinite(yv) ||
        (spec.xLog && xv <= 0) || (spec.yLog && yv <= 0);
      if (!bad) pts.push([x(xv), y(yv)]);
    }
    if (s.points) {
      for (const [px, py] of pts) {
        parts.push(`<circle cx="${px}" cy="${py}" r="2.2" fill="${color}"/>`);
      }
    } else {
      const d = d3line()(pts);
      if (d !== null) {
        const dash = s.dash ? ` stroke-dasharray="${s.dash}"` : "";
        parts.push(
          `<path d="${d}" fill="none" stroke="${color}" stroke-width="${s.width ?? 1.5}"${dash}/>`,
        );
      }
    }
  });

  let ly = MARGIN.top + 8;
  spec.series.forEach((s, i) => {
    if (!s.label) return;
    const color = s.color ?? PALETTE[i % PALETTE.length];
    const lx = W - MARGIN.right - 150;
    parts.push(
      `<line x1="${lx}" y1="${ly}" x2="${lx + 18}" y2="${ly}" stroke="${color}" ` +
        `stroke-width="2"${s.dash ? ` stroke-dasharray="${s.dash}"` : ""}/>`,
      `<text x="${lx + 23}" y="${ly + 3}">${esc(s.label)}</text>`,
    );
    ly += 14;
  });

  if (spec.title) {
    parts.push(
      `<text x="${W / 2}" y="${MARGIN.top - 14}" text-anchor="middle" font-size="13">${esc(spec.title)}</text>`,
    );
  }
  parts.push(
    `<text x="${(MARGIN.left + W - MARGIN.right) / 2}" y="${H - 10}" text-anchor="middle">${esc(spec.xLabel)}</text>`,
    `<text x="14" y="${(MARGIN.top + H - MARGIN.bottom) / 2}" text-anchor="middle" ` +
      `transform="rotate(-90 14 ${(MARGIN.top + H - MARGIN.bottom) / 2})">${esc(spec.yLabel)}</text>`,
  );
  parts.push("</svg>");
  return parts.join("\n");
}
