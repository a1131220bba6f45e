/**
 * Least-squares refit of the mixing decay slope.
 *
 * Convention (must match the producer): straight-line least squares of
 * ln(tv) on K over the rows with tv > 0. The renderer recomputes the fit
 * from mixing.csv and cross-checks it against the slope recorded in
 * summary.json before drawing the fitted line.
 */

export interface LineFit {
  slope: number;
  intercept: number;
  pointsUsed: number;
}

export function fitLogSlope(K: number[], tv: number[]): LineFit {
  if (K.length !== tv.length) {
    throw new Error(`length mismatch: ${K.length} horizons, ${tv.length} tv values`);
  }
  const xs: number[] = [];
  const ys: number[] = [];
  for (let i = 0; i < K.length; i++) {
    const t = tv[i] as number;
    if (t > 0) {
      xs.push(K[i] as number);
      ys.push(Math.log(t));
    }
  }
  const n = xs.length;
  if (n < 2) {
    throw new Error(`need at least 2 rows with tv > 0, have ${n}`);
  }
  let mx = 0;
  let my = 0;
  for (let i = 0; i < n; i++) {
    mx += xs[i] as number;
    my += ys[i] as number;
  }
  mx /= n;
  my /= n;
  let sxx = 0;
  let sxy = 0;
  for (let i = 0; i < n; i++) {
    const dx = (xs[i] as number) - mx;
    sxx += dx * dx;
    sxy += dx * ((ys[i] as number) - my);
  }
  if (sxx === 0) {
    throw new Error("all usable rows share one horizon; slope is undefined");
  }
  const slope = sxy / sxx;
  return { slope, intercept: my - slope * mx, pointsUsed: n };
}
