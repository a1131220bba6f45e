/**
 * Shared SVG primitives for the figure builders.
 *
 * Everything here is a pure function of its arguments: fixed fonts, fixed
 * layout constants, and coordinates rounded through fx() so a re-render of
 * the same inputs reproduces the output byte for byte.
 */

export function esc(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Deterministic coordinate formatting: two decimals everywhere. */
export function fx(v: number): string {
  // -0.00 and 0.00 must not differ between runs
  const s = v.toFixed(2);
  return s === "-0.00" ? "0.00" : s;
}

/** Round-number axis ticks covering [min, max] with about `count` steps. */
export function niceTicks(min: number, max: number, count = 5): number[] {
  if (!(max > min)) {
    return [min];
  }
  const span = max - min;
  const step0 = span / count;
  const mag = Math.pow(10, Math.floor(Math.log10(step0)));
  let step = mag;
  for (const m of [1, 2, 5, 10]) {
    if (m * mag >= step0) {
      step = m * mag;
      break;
    }
  }
  const ticks: number[] = [];
  let v = Math.ceil(min / step) * step;
  for (; v <= max + 1e-9 * span; v += step) {
    ticks.push(Math.abs(v) < 1e-12 * span ? 0 : v);
  }
  return ticks;
}

/** Tick label: trim trailing zeros but never switch notation between runs. */
export function fmtTick(v: number): string {
  if (v === 0) {
    return "0";
  }
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) {
    return v.toExponential(1);
  }
  return String(parseFloat(v.toFixed(6)));
}

export interface Frame {
  x0: number;
  y0: number;
  w: number;
  h: number;
}

export interface Scale {
  (v: number): number;
  domain: [number, number];
}

export function linScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const k = d1 === d0 ? 0 : (r1 - r0) / (d1 - d0);
  const f = ((v: number) => r0 + (v - d0) * k) as Scale;
  f.domain = domain;
  return f;
}

export const FONT = "font-family=\"Helvetica, Arial, sans-serif\"";

/** Axis frame with ticks, grid lines, and labels for one panel. */
export function axes(
  f: Frame,
  sx: Scale,
  sy: Scale,
  opts: {
    xLabel: string;
    yLabel: string;
    xTicks?: number[];
    yTicks?: number[];
    xTickFmt?: (v: number) => string;
    yTickFmt?: (v: number) => string;
    grid?: boolean;
  },
): string {
  const xt = opts.xTicks ?? niceTicks(sx.domain[0], sx.domain[1]);
  const yt = opts.yTicks ?? niceTicks(sy.domain[0], sy.domain[1]);
  const fmx = opts.xTickFmt ?? fmtTick;
  const fmy = opts.yTickFmt ?? fmtTick;
  const parts: string[] = [];
  if (opts.grid !== false) {
    for (const v of xt) {
      const x = fx(sx(v));
      parts.push(`<line x1="${x}" y1="${fx(f.y0)}" x2="${x}" y2="${fx(f.y0 + f.h)}" stroke="#eee"/>`);
    }
    for (const v of yt) {
      const y = fx(sy(v));
      parts.push(`<line x1="${fx(f.x0)}" y1="${y}" x2="${fx(f.x0 + f.w)}" y2="${y}" stroke="#eee"/>`);
    }
  }
  parts.push(
    `<rect x="${fx(f.x0)}" y="${fx(f.y0)}" width="${fx(f.w)}" height="${fx(f.h)}" fill="none" stroke="#444"/>`,
  );
  for (const v of xt) {
    const x = fx(sx(v));
    parts.push(`<line x1="${x}" y1="${fx(f.y0 + f.h)}" x2="${x}" y2="${fx(f.y0 + f.h + 4)}" stroke="#444"/>`);
    parts.push(
      `<text x="${x}" y="${fx(f.y0 + f.h + 16)}" ${FONT} font-size="10" fill="#333" text-anchor="middle">${esc(fmx(v))}</text>`,
    );
  }
  for (const v of yt) {
    const y = fx(sy(v));
    parts.push(`<line x1="${fx(f.x0 - 4)}" y1="${y}" x2="${fx(f.x0)}" y2="${y}" stroke="#444"/>`);
    parts.push(
      `<text x="${fx(f.x0 - 6)}" y="${fx(sy(v) + 3)}" ${FONT} font-size="10" fill="#333" text-anchor="end">${esc(fmy(v))}</text>`,
    );
  }
  parts.push(
    `<text x="${fx(f.x0 + f.w / 2)}" y="${fx(f.y0 + f.h + 32)}" ${FONT} font-size="11" fill="#111" text-anchor="middle">${esc(opts.xLabel)}</text>`,
  );
  parts.push(
    `<text x="${fx(f.x0 - 38)}" y="${fx(f.y0 + f.h / 2)}" ${FONT} font-size="11" fill="#111" text-anchor="middle" transform="rotate(-90 ${fx(f.x0 - 38)} ${fx(f.y0 + f.h / 2)})">${esc(opts.yLabel)}</text>`,
  );
  return parts.join("\n");
}

export function polyline(
  xs: number[],
  ys: number[],
  sx: Scale,
  sy: Scale,
  style: { color: string; width?: number; opacity?: number; dash?: string },
): string {
  const pts: string[] = [];
  for (let i = 0; i < xs.length; i++) {
    pts.push(`${fx(sx(xs[i] as number))},${fx(sy(ys[i] as number))}`);
  }
  const dash = style.dash ? ` stroke-dasharray="${style.dash}"` : "";
  const op = style.opacity !== undefined ? ` opacity="${style.opacity}"` : "";
  return `<polyline points="${pts.join(" ")}" fill="none" stroke="${style.color}" stroke-width="${style.width ?? 1.5}"${dash}${op}/>`;
}

export function circleMarks(
  xs: number[],
  ys: number[],
  sx: Scale,
  sy: Scale,
  color: string,
  r = 3,
): string {
  const parts: string[] = [];
  for (let i = 0; i < xs.length; i++) {
    parts.push(
      `<circle cx="${fx(sx(xs[i] as number))}" cy="${fx(sy(ys[i] as number))}" r="${r}" fill="${color}"/>`,
    );
  }
  return parts.join("\n");
}

export function title(W: number, text: string): string {
  return `<text x="${fx(W / 2)}" y="18" ${FONT} font-size="13" fill="#111" text-anchor="middle" font-weight="bold">${esc(text)}</text>`;
}

export function svgDoc(W: number, H: number, body: string): string {
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${W}" height="${H}" viewBox="0 0 ${W} ${H}">\n` +
    `<rect x="0" y="0" width="${W}" height="${H}" fill="white"/>\n` +
    body +
    "\n</svg>\n"
  );
}

/** Two-stop color ramp used by the heat panel: white up to deep blue. */
export function heatColor(t: number): string {
  const u = Math.max(0, Math.min(1, t));
  const r = Math.round(255 - 215 * u);
  const g = Math.round(255 - 175 * u);
  const b = Math.round(255 - 95 * u);
  return `rgb(${r},${g},${b})`;
}

export const SERIES_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
