/**
 * The five figure builders.
 *
 * Each builder is a pure function from already-loaded artifact text to an
 * SVG string. No science is recomputed here: eigenvalues, densities,
 * reference curves, and noise floors are read straight from the artifact
 * tables. The one numeric operation a builder performs is the mixing-slope
 * refit, and that exists only to cross-check the recorded slope before the
 * fitted line is drawn.
 */

import { ArtifactError } from "./artifacts.js";
import { parseCsv, col, numCol } from "./csv.js";
import { fitLogSlope } from "./fit.js";
import {
  axes,
  circleMarks,
  esc,
  FONT,
  fx,
  heatColor,
  linScale,
  niceTicks,
  polyline,
  SERIES_COLORS,
  svgDoc,
  title,
  fmtTick,
  type Frame,
} from "./svg.js";

// ---------------------------------------------------------------------------
// 1. spectrum: eigenfunction panel, eigenvalue ladder, Slater-density heat map
// ---------------------------------------------------------------------------

export function spectrumFigure(eigenvaluesCsv: string, modesCsv: string, slaterCsv: string): string {
  const eig = parseCsv(eigenvaluesCsv);
  const ks = numCol(eig, "k");
  const es = numCol(eig, "e_k");
  const modes = parseCsv(modesCsv);
  const r = numCol(modes, "r");
  const modeNames = modes.header.filter((h) => h.startsWith("phi"));

  const W = 980;
  const H = 360;
  const parts: string[] = [title(W, "Spectral basis of the tilted generator")];

  // eigenfunction panel, trimmed to the region where the modes live
  const fa: Frame = { x0: 56, y0: 40, w: 330, h: 250 };
  const rMax = Math.min(12, r[r.length - 1] as number);
  let lo = 0;
  let hi = 0;
  const curves: { name: string; ys: number[] }[] = [];
  for (const name of modeNames) {
    const ys = numCol(modes, name);
    curves.push({ name, ys });
  }
  const keep: number[] = [];
  for (let i = 0; i < r.length; i++) {
    if ((r[i] as number) <= rMax) {
      keep.push(i);
      for (const c of curves) {
        const v = c.ys[i] as number;
        if (v < lo) lo = v;
        if (v > hi) hi = v;
      }
    }
  }
  const sxA = linScale([0, rMax], [fa.x0, fa.x0 + fa.w]);
  const syA = linScale([lo * 1.08, hi * 1.08], [fa.y0 + fa.h, fa.y0]);
  parts.push(axes(fa, sxA, syA, { xLabel: "r", yLabel: "phi_k(r)" }));
  const rr = keep.map((i) => r[i] as number);
  curves.forEach((c, j) => {
    const ys = keep.map((i) => c.ys[i] as number);
    const color = SERIES_COLORS[j % SERIES_COLORS.length] as string;
    parts.push(polyline(rr, ys, sxA, syA, { color, width: 1.2 }));
  });
  curves.forEach((c, j) => {
    const color = SERIES_COLORS[j % SERIES_COLORS.length] as string;
    const y = fa.y0 + 14 + 13 * j;
    parts.push(`<line x1="${fx(fa.x0 + fa.w - 64)}" y1="${fx(y - 3)}" x2="${fx(fa.x0 + fa.w - 46)}" y2="${fx(y - 3)}" stroke="${color}" stroke-width="1.2"/>`);
    parts.push(`<text x="${fx(fa.x0 + fa.w - 42)}" y="${fx(y)}" ${FONT} font-size="9" fill="#333">${esc(c.name)}</text>`);
  });

  // eigenvalue ladder
  const fb: Frame = { x0: 470, y0: 40, w: 120, h: 250 };
  const eTop = (es[es.length - 1] as number) * 1.1;
  const sxB = linScale([0.5, ks.length + 0.5], [fb.x0, fb.x0 + fb.w]);
  const syB = linScale([0, eTop], [fb.y0 + fb.h, fb.y0]);
  parts.push(
    axes(fb, sxB, syB, {
      xLabel: "k",
      yLabel: "e_k",
      xTicks: ks,
      xTickFmt: (v) => String(v),
    }),
  );
  for (let i = 0; i < ks.length; i++) {
    const k = ks[i] as number;
    const y = fx(syB(es[i] as number));
    parts.push(
      `<line x1="${fx(sxB(k - 0.32))}" y1="${y}" x2="${fx(sxB(k + 0.32))}" y2="${y}" stroke="#1f77b4" stroke-width="2.5"/>`,
    );
  }
  parts.push(
    `<text x="${fx(fb.x0 + fb.w / 2)}" y="${fx(fb.y0 - 6)}" ${FONT} font-size="10" fill="#333" text-anchor="middle">e_1 = ${esc((es[0] as number).toFixed(4))}</text>`,
  );

  // Slater-density heat map (two-walker grid) or profile (single walker)
  const fc: Frame = { x0: 660, y0: 40, w: 250, h: 250 };
  const slater = parseCsv(slaterCsv);
  if (slater.header.includes("r2")) {
    const r1 = numCol(slater, "r1");
    const r2 = numCol(slater, "r2");
    const d2 = numCol(slater, "delta2");
    const n = Math.round(Math.sqrt(r1.length));
    if (n * n !== r1.length) {
      throw new ArtifactError(`slater grid has ${r1.length} cells, not a square grid`);
    }
    let dMax = 0;
    for (const v of d2) if (v > dMax) dMax = v;
    const gMin = r1[0] as number;
    const gMax = r1[r1.length - 1] as number;
    const cell = fc.w / n;
    const sxC = linScale([gMin, gMax], [fc.x0 + cell / 2, fc.x0 + fc.w - cell / 2]);
    const syC = linScale([gMin, gMax], [fc.y0 + fc.h - cell / 2, fc.y0 + cell / 2]);
    for (let i = 0; i < r1.length; i++) {
      const v = (d2[i] as number) / (dMax > 0 ? dMax : 1);
      if (v <= 0) continue;
      const cx = sxC(r1[i] as number) - cell / 2;
      const cy = syC(r2[i] as number) - cell / 2;
      parts.push(
        `<rect x="${fx(cx)}" y="${fx(cy)}" width="${fx(cell + 0.35)}" height="${fx(cell + 0.35)}" fill="${heatColor(v)}"/>`,
      );
    }
    const xt = niceTicks(gMin, gMax, 4);
    parts.push(
      axes(fc, sxC, syC, { xLabel: "r1", yLabel: "r2", xTicks: xt, yTicks: xt, grid: false }),
    );
    parts.push(
      `<text x="${fx(fc.x0 + fc.w / 2)}" y="${fx(fc.y0 - 6)}" ${FONT} font-size="10" fill="#333" text-anchor="middle">squared Slater determinant (normalized)</text>`,
    );
  } else {
    const r1 = numCol(slater, "r1");
    const d2 = numCol(slater, "delta2");
    let dMax = 0;
    for (const v of d2) if (v > dMax) dMax = v;
    const sxC = linScale([r1[0] as number, r1[r1.length - 1] as number], [fc.x0, fc.x0 + fc.w]);
    const syC = linScale([0, dMax * 1.08], [fc.y0 + fc.h, fc.y0]);
    parts.push(axes(fc, sxC, syC, { xLabel: "r", yLabel: "density" }));
    parts.push(polyline(r1, d2, sxC, syC, { color: "#1f77b4", width: 1.5 }));
  }

  return svgDoc(W, H, parts.join("\n"));
}

// ---------------------------------------------------------------------------
// 2. overlay: empirical rescaled marginal against the stationary reference
// ---------------------------------------------------------------------------

export function overlayFigure(marginalCsv: string): string {
  const t = parseCsv(marginalCsv);
  const x = numCol(t, "x");
  const emp = numCol(t, "empirical");
  const ref = numCol(t, "reference");
  const W = 700;
  const H = 300;
  const f: Frame = { x0: 60, y0: 40, w: 600, h: 210 };
  const binW = x.length > 1 ? (x[1] as number) - (x[0] as number) : 0.1;
  let yMax = 0;
  for (const v of emp) if (v > yMax) yMax = v;
  for (const v of ref) if (v > yMax) yMax = v;
  const sx = linScale([(x[0] as number) - binW / 2, (x[x.length - 1] as number) + binW / 2], [f.x0, f.x0 + f.w]);
  const sy = linScale([0, yMax * 1.12], [f.y0 + f.h, f.y0]);
  const parts: string[] = [title(W, "Rescaled top height against the stationary law")];
  parts.push(axes(f, sx, sy, { xLabel: "rescaled height", yLabel: "bin mass" }));
  for (let i = 0; i < x.length; i++) {
    const v = emp[i] as number;
    if (v <= 0) continue;
    const xl = sx((x[i] as number) - binW / 2);
    const xr = sx((x[i] as number) + binW / 2);
    const yt = sy(v);
    parts.push(
      `<rect x="${fx(xl)}" y="${fx(yt)}" width="${fx(xr - xl)}" height="${fx(sy(0) - yt)}" fill="#1f77b4" opacity="0.45"/>`,
    );
  }
  parts.push(polyline(x, ref, sx, sy, { color: "#d62728", width: 2 }));
  const ly = f.y0 + 14;
  parts.push(`<rect x="${fx(f.x0 + f.w - 168)}" y="${fx(ly - 9)}" width="12" height="9" fill="#1f77b4" opacity="0.45"/>`);
  parts.push(`<text x="${fx(f.x0 + f.w - 152)}" y="${fx(ly)}" ${FONT} font-size="10" fill="#333">sampled walks</text>`);
  parts.push(`<line x1="${fx(f.x0 + f.w - 168)}" y1="${fx(ly + 10)}" x2="${fx(f.x0 + f.w - 156)}" y2="${fx(ly + 10)}" stroke="#d62728" stroke-width="2"/>`);
  parts.push(`<text x="${fx(f.x0 + f.w - 152)}" y="${fx(ly + 14)}" ${FONT} font-size="10" fill="#333">stationary reference</text>`);
  return svgDoc(W, H, parts.join("\n"));
}

// ---------------------------------------------------------------------------
// 3. convergence: distance to the limit as the tilt softens, with noise floor
// ---------------------------------------------------------------------------

export function convergenceFigure(convergenceCsv: string): string {
  const t = parseCsv(convergenceCsv);
  const lam = numCol(t, "lambda");
  const metric = col(t, "metric");
  const value = numCol(t, "value");
  const floor = numCol(t, "noise_floor");

  // preserve row order per metric; lambdas repeat per metric block
  const groups = new Map<string, { lam: number[]; value: number[]; floor: number[] }>();
  for (let i = 0; i < lam.length; i++) {
    const m = metric[i] as string;
    let g = groups.get(m);
    if (!g) {
      g = { lam: [], value: [], floor: [] };
      groups.set(m, g);
    }
    g.lam.push(lam[i] as number);
    g.value.push(value[i] as number);
    g.floor.push(floor[i] as number);
  }

  const lamsSeen: number[] = [];
  for (const v of lam) if (!lamsSeen.includes(v)) lamsSeen.push(v);

  const W = 700;
  const H = 320;
  const f: Frame = { x0: 64, y0: 40, w: 590, h: 220 };
  let yMax = 0;
  for (const v of value) if (v > yMax) yMax = v;
  for (const v of floor) if (v > yMax) yMax = v;
  // position tilts evenly in row order: convergence is read left to right
  const sx = linScale([-0.35, lamsSeen.length - 0.65], [f.x0, f.x0 + f.w]);
  const sy = linScale([0, yMax * 1.25], [f.y0 + f.h, f.y0]);
  const parts: string[] = [title(W, "Distance to the stationary limit as the tilt softens")];
  const maxFloor = Math.max(...floor);
  parts.push(
    `<rect x="${fx(f.x0)}" y="${fx(sy(maxFloor))}" width="${fx(f.w)}" height="${fx(sy(0) - sy(maxFloor))}" fill="#f2f2f2"/>`,
  );
  parts.push(
    axes(f, sx, sy, {
      xLabel: "area tilt lambda",
      yLabel: "distance",
      xTicks: lamsSeen.map((_, i) => i),
      xTickFmt: (i) => fmtTick(lamsSeen[Math.round(i)] as number),
      grid: false,
    }),
  );
  let j = 0;
  for (const [name, g] of groups) {
    const color = SERIES_COLORS[j % SERIES_COLORS.length] as string;
    const xi = g.lam.map((v) => lamsSeen.indexOf(v));
    parts.push(polyline(xi, g.value, sx, sy, { color, width: 2 }));
    parts.push(circleMarks(xi, g.value, sx, sy, color, 3.5));
    const fl = g.floor[g.floor.length - 1] as number;
    if (fl > 0) {
      parts.push(
        polyline([-0.35, lamsSeen.length - 0.65], [fl, fl], sx, sy, {
          color,
          width: 1,
          dash: "4 3",
          opacity: 0.8,
        }),
      );
    }
    const ly = f.y0 + 14 + 13 * j;
    parts.push(`<line x1="${fx(f.x0 + f.w - 150)}" y1="${fx(ly - 3)}" x2="${fx(f.x0 + f.w - 132)}" y2="${fx(ly - 3)}" stroke="${color}" stroke-width="2"/>`);
    parts.push(`<text x="${fx(f.x0 + f.w - 128)}" y="${fx(ly)}" ${FONT} font-size="10" fill="#333">${esc(name)}</text>`);
    j += 1;
  }
  parts.push(
    `<text x="${fx(f.x0 + 6)}" y="${fx(sy(maxFloor) + 12)}" ${FONT} font-size="9" fill="#888">sampling noise floor</text>`,
  );
  return svgDoc(W, H, parts.join("\n"));
}

// ---------------------------------------------------------------------------
// 4. mixing: total-variation decay over coupling horizons, refit cross-check
// ---------------------------------------------------------------------------

export interface MixingSummary {
  slope: number;
  intercept: number;
  inconclusive: boolean;
  method: string;
  fit: string;
}

/** Tolerance for the refit of the recorded slope from the CSV rows. */
export const SLOPE_MATCH_TOL = 1e-9;

export function mixingFigure(mixingCsv: string, summary: MixingSummary): string {
  const t = parseCsv(mixingCsv);
  const K = numCol(t, "K");
  const tv = numCol(t, "tv");

  const refit = fitLogSlope(K, tv);
  const diff = Math.abs(refit.slope - summary.slope);
  if (!(diff <= SLOPE_MATCH_TOL)) {
    throw new ArtifactError(
      `mixing slope refit disagrees with summary.json: refit ${refit.slope}, recorded ${summary.slope}, |diff| ${diff}`,
    );
  }

  const W = 700;
  const H = 320;
  const f: Frame = { x0: 64, y0: 40, w: 590, h: 220 };
  const logs = tv.map((v) => (v > 0 ? Math.log10(v) : NaN)).filter((v) => Number.isFinite(v));
  const yLo = Math.floor(Math.min(...logs));
  const yHi = Math.ceil(Math.max(...logs) + 0.2);
  const kLo = (K[0] as number) - 0.4;
  const kHi = (K[K.length - 1] as number) + 0.4;
  const sx = linScale([kLo, kHi], [f.x0, f.x0 + f.w]);
  const sy = linScale([yLo, yHi], [f.y0 + f.h, f.y0]);
  const yTicks: number[] = [];
  for (let v = yLo; v <= yHi; v++) yTicks.push(v);
  const parts: string[] = [title(W, "Mixing of endpoint disagreement over coupling horizons")];
  parts.push(
    axes(f, sx, sy, {
      xLabel: "horizons K",
      yLabel: "total variation",
      xTicks: K,
      xTickFmt: (v) => String(v),
      yTicks,
      yTickFmt: (v) => `1e${v}`,
    }),
  );
  // fitted line from the verified refit, drawn under the data points
  const lineY = [kLo, kHi].map((k) => (refit.slope * k + refit.intercept) / Math.LN10);
  parts.push(polyline([kLo, kHi], lineY, sx, sy, { color: "#888", width: 1.2, dash: "5 4" }));
  const ptsK: number[] = [];
  const ptsY: number[] = [];
  for (let i = 0; i < K.length; i++) {
    const v = tv[i] as number;
    if (v > 0) {
      ptsK.push(K[i] as number);
      ptsY.push(Math.log10(v));
    }
  }
  parts.push(circleMarks(ptsK, ptsY, sx, sy, "#1f77b4", 4));
  parts.push(
    `<text x="${fx(f.x0 + f.w - 8)}" y="${fx(f.y0 + 14)}" ${FONT} font-size="10" fill="#333" text-anchor="end">fit slope ${esc(summary.slope.toFixed(4))} per horizon (${esc(summary.method)})</text>`,
  );
  if (summary.inconclusive) {
    parts.push(
      `<text x="${fx(f.x0 + f.w - 8)}" y="${fx(f.y0 + 27)}" ${FONT} font-size="10" fill="#b00" text-anchor="end">flagged inconclusive by the producer</text>`,
    );
  }
  return svgDoc(W, H, parts.join("\n"));
}

// ---------------------------------------------------------------------------
// 5. paths: bundle of sampled walk trajectories
// ---------------------------------------------------------------------------

export function pathsFigure(pathsCsv: string, maxSamples = 40): string {
  const t = parseCsv(pathsCsv);
  const sid = numCol(t, "sample_id");
  const ti = numCol(t, "time_index");
  const wi = numCol(t, "walk_index");
  const h = numCol(t, "height");

  let nSteps = 0;
  let nWalks = 0;
  let nSamples = 0;
  for (let i = 0; i < sid.length; i++) {
    if ((ti[i] as number) > nSteps) nSteps = ti[i] as number;
    if ((wi[i] as number) + 1 > nWalks) nWalks = (wi[i] as number) + 1;
    if ((sid[i] as number) + 1 > nSamples) nSamples = (sid[i] as number) + 1;
  }
  const used = Math.min(maxSamples, nSamples);
  // key (sample, walk) -> heights by time index
  const series = new Map<number, number[]>();
  let hMax = 0;
  for (let i = 0; i < sid.length; i++) {
    const s = sid[i] as number;
    if (s >= used) continue;
    const key = s * nWalks + (wi[i] as number);
    let arr = series.get(key);
    if (!arr) {
      arr = new Array<number>(nSteps + 1).fill(0);
      series.set(key, arr);
    }
    arr[ti[i] as number] = h[i] as number;
    if ((h[i] as number) > hMax) hMax = h[i] as number;
  }

  const W = 700;
  const H = 320;
  const f: Frame = { x0: 60, y0: 40, w: 600, h: 230 };
  const sx = linScale([0, nSteps], [f.x0, f.x0 + f.w]);
  const sy = linScale([0, hMax * 1.06], [f.y0 + f.h, f.y0]);
  const parts: string[] = [title(W, `Sampled walk bundle (${used} of ${nSamples} samples)`)];
  parts.push(axes(f, sx, sy, { xLabel: "time step", yLabel: "height" }));
  const times: number[] = [];
  for (let k = 0; k <= nSteps; k++) times.push(k);
  const keys = Array.from(series.keys()).sort((a, b) => a - b);
  for (const key of keys) {
    const walk = key % nWalks;
    const color = SERIES_COLORS[walk % SERIES_COLORS.length] as string;
    parts.push(polyline(times, series.get(key) as number[], sx, sy, { color, width: 0.8, opacity: 0.3 }));
  }
  return svgDoc(W, H, parts.join("\n"));
}
