"""Empirical-law comparisons for walk and diffusion ensembles.

Three layers live here.  Metric functions (ks_distance, binned_tv) are
pure and symmetric where the mathematics is.  Reference-law builders
turn a Slater ensemble into callable CDFs and binned mass tables by
chamber quadrature.  Experiments tie the two together: the tilt sweep
checks that rescaled mid-time marginals approach the stationary
ensemble law as the tilt strength drops, and the mixing experiment
measures how fast two bridges with different boundary data agree on a
central time window.

Monte Carlo noise floors: 1.63/sqrt(S) for KS (the 99% point of the
Kolmogorov law), sqrt(B/S) for a B-bin TV.  Every report carries its
floor; conclusions are only meaningful above twice the floor.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .determinantal import SlaterEnsemble, ordered_cell_fractions
from .errors import ValidationError
from .sampler import default_endpoints, bridge_marginal, bridge_two_time, \
    sample_exact

_METRICS = ("KS", "BinnedTV")


@dataclass(frozen=True)
class ComparisonReport:
    metric: str
    value: float
    sample_count: int  # 0 for exact (noise-free) comparisons
    bins: int  # per-axis bin count; 0 for KS
    noise_floor: float
    notes: str = ""

    def __post_init__(self):
        if self.metric not in _METRICS:
            raise ValidationError(f"metric must be one of {_METRICS}")
        if not 0.0 <= self.value <= 1.0:
            raise ValidationError("distance value must lie in [0, 1]")
        if self.sample_count < 0 or self.bins < 0 or self.noise_floor < 0:
            raise ValidationError("counts and floors must be nonnegative")


def ks_distance(samples, reference_cdf) -> float:
    """Sup distance between the empirical CDF and reference_cdf.

    Evaluated at the sample points with ties resolved through the
    right-continuous empirical CDF: exact for atomic references, within
    1/S of the classical two-sided statistic for continuous ones.
    """
    s = np.sort(np.asarray(samples, dtype=float).ravel())
    if s.size < 100:
        raise ValidationError("ks_distance needs at least 100 samples")
    ecdf = np.searchsorted(s, s, side="right") / s.size
    ref = np.clip(np.asarray(reference_cdf(s), dtype=float), 0.0, 1.0)
    if ref.shape != s.shape:
        raise ValidationError("reference_cdf must map points to values")
    return float(np.max(np.abs(ecdf - ref)))


def binned_tv(p, q) -> float:
    """Total variation between two nonnegative mass tables of equal shape.

    Each table is normalized to a probability vector first, so raw
    counts and quadrature masses compare directly.
    """
    a = np.asarray(p, dtype=float)
    b = np.asarray(q, dtype=float)
    if a.shape != b.shape:
        raise ValidationError("mass tables must share a shape")
    if np.any(a < 0) or np.any(b < 0):
        raise ValidationError("mass tables must be nonnegative")
    ta, tb = a.sum(), b.sum()
    if ta <= 0 or tb <= 0:
        raise ValidationError("mass tables must have positive total mass")
    return 0.5 * float(np.abs(a / ta - b / tb).sum())


def non_increasing_within(values, slack: float) -> bool:
    v = list(values)
    return all(v[i + 1] <= v[i] + slack for i in range(len(v) - 1))


# ---------------------------------------------------------------------------
# reference laws from a Slater ensemble

def stationary_top_cdf(ensemble: SlaterEnsemble, cells: int | None = None):
    """CDF of the top coordinate under Delta^2/norm, as a callable.

    Midpoint quadrature over the chamber; the cumulative is attached to
    cell right edges and interpolated linearly between them.
    """
    if cells is None:
        cells = int(min(1500, 20_000_000 ** (1.0 / ensemble.n)))
    centers, weights = ensemble.chamber_grid(cells)
    dens = ensemble.slater_on_grid(centers) ** 2 * weights
    axes = tuple(range(ensemble.n - 1))
    mass = dens.sum(axis=axes) if axes else dens
    delta = ensemble.r_cut / cells
    xs = np.concatenate([[0.0], (np.arange(cells) + 1.0) * delta])
    cum = np.concatenate([[0.0], np.cumsum(mass) / mass.sum()])

    def cdf(x):
        return np.interp(np.asarray(x, dtype=float), xs, cum,
                         left=0.0, right=1.0)

    return cdf


def lattice_joint_bins(ensemble: SlaterEnsemble, sigma_H: float,
                       bins: int = 24, edge: float = 4.0,
                       q: int = 4):
    """Lattice-snapped joint bins for an ordered pair of unit-period walks.

    Bins finer than one lattice unit alias badly (atoms stride bin
    boundaries), so per-axis edges are snapped to whole sites: bin j
    holds heights c_{j-1}+1 .. c_j, and its reference mass integrates
    Delta^2 over ((c_{j-1}+0.5)/sigma_H, (c_j+0.5)/sigma_H], the exact
    union of the atoms' probability cells.  The effective bin count is
    min(bins, sites under the edge).  Returns (height_edges, masses).
    """
    if ensemble.n != 2:
        raise ValidationError("joint bin table is defined for two walks")
    if q % 2:
        raise ValidationError("q must be even so cells meet half-integers")
    M = int(round(edge * sigma_H))
    bins_eff = min(bins, M)
    if bins_eff < 2:
        raise ValidationError("edge covers too few lattice sites to bin")
    cedges = np.round(np.arange(bins_eff + 1) * M / bins_eff).astype(int)
    delta = 1.0 / (q * sigma_H)
    m = int(min(math.floor(ensemble.basis.config.r_max / delta),
                math.ceil(ensemble.r_cut / delta)))
    centers = (np.arange(m) + 0.5) * delta
    dens = ensemble.slater_on_grid(centers) ** 2 \
        * ordered_cell_fractions(m, 2)
    ch = (np.arange(m) + 0.5) / q  # cell centers in height units
    half_edges = cedges[1:] + 0.5
    bin_of = np.minimum(np.searchsorted(half_edges, ch), bins_eff - 1)
    out = np.zeros((bins_eff, bins_eff))
    np.add.at(out, (bin_of[:, None], bin_of[None, :]), dens)
    return cedges, out / out.sum()


def _snapped_hist_2d(h1, h2, cedges: np.ndarray) -> np.ndarray:
    bins_eff = cedges.size - 1
    half_edges = cedges[1:] + 0.5
    b1 = np.minimum(np.searchsorted(half_edges, h1), bins_eff - 1)
    b2 = np.minimum(np.searchsorted(half_edges, h2), bins_eff - 1)
    out = np.zeros((bins_eff, bins_eff))
    np.add.at(out, (b1, b2), 1.0)
    return out


def _clip_hist_2d(x1, x2, bins: int, edge: float) -> np.ndarray:
    b1 = np.clip((np.asarray(x1) / edge * bins).astype(int), 0, bins - 1)
    b2 = np.clip((np.asarray(x2) / edge * bins).astype(int), 0, bins - 1)
    out = np.zeros((bins, bins))
    np.add.at(out, (b1, b2), 1.0)
    return out


def _hist_1d(values, bins: int, edge: float) -> np.ndarray:
    b = np.minimum((np.asarray(values) / edge * bins).astype(int), bins)
    return np.bincount(b, minlength=bins + 1).astype(float)


# ---------------------------------------------------------------------------
# tilt-convergence experiment

@dataclass(frozen=True)
class TiltConvergenceRow:
    lam: float
    H: float
    N: int
    reports: tuple  # KS on the top coordinate; plus the joint TV for n=2


def _fan_out(worker, items, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(worker, items))
    return [worker(it) for it in items]


def tilt_convergence_experiment(models, t_probe: float,
                                reference: SlaterEnsemble, *,
                                samples: int = 20_000, seed: int = 0,
                                a_target: float = 8.0, joint_bins: int = 24,
                                edge: float = 4.0, threads: int = 1):
    """Rescaled mid-window marginals against the stationary ensemble law.

    For each model (tilt strengths strictly decreasing) a bridge of
    a_target * H^2 steps is sampled exactly and the configuration at
    rescaled time t_probe past the midpoint is rescaled by sigma * H
    with heights shifted by half the lattice period first: the lattice
    CDF then meets the continuum CDF at each atom's probability-cell
    right edge, the usual continuity correction.  Without the shift
    every comparison carries a systematic half-cell offset of order
    1/H that dwarfs the convergence being measured.  The top
    coordinate is compared to the reference CDF by KS; for two walks
    the joint histogram on lattice-snapped bins is also compared to
    the quadrature table by TV.  Deterministic given the seed.
    """
    models = list(models)
    if not models:
        raise ValidationError("need at least one model")
    lams = [m.lam for m in models]
    if any(m.scale is None for m in models):
        raise ValidationError("every model needs a tilt potential")
    if any(lams[i + 1] >= lams[i] for i in range(len(lams) - 1)):
        raise ValidationError("tilt strengths must strictly decrease")
    n = reference.n
    if any(m.n != n for m in models):
        raise ValidationError("model walk counts must match the reference")
    if samples < 100:
        raise ValidationError("need at least 100 samples per model")
    if a_target < 8.0:
        raise ValidationError("bridge length must cover a_N >= 8")
    cdf = stationary_top_cdf(reference)
    if n == 2 and any(m.step.period != 1 for m in models):
        raise ValidationError("joint bins need a unit-period step law")

    def worker(item):
        idx, model = item
        H = model.scale.H
        sig = math.sqrt(model.step.sigma2)
        N = int(math.ceil(a_target * H * H))
        j = N // 2 + int(round(t_probe * H * H))
        if not 0 < j < N:
            raise ValidationError("probe time falls outside the bridge")
        ends = default_endpoints(model)
        ens = sample_exact(model, ends, ends, N, samples, seed + idx)
        heights = ens.paths[:, j, :]
        x = (heights + model.step.period / 2.0) / (sig * H)
        reports = [ComparisonReport(
            "KS", ks_distance(x[:, -1], cdf), samples, 0,
            1.63 / math.sqrt(samples),
            "top-coordinate marginal vs stationary quadrature CDF")]
        if n == 2:
            cedges, joint_ref = lattice_joint_bins(reference, sig * H,
                                                   joint_bins, edge)
            emp = _snapped_hist_2d(heights[:, 0], heights[:, 1], cedges)
            bins_eff = cedges.size - 1
            reports.append(ComparisonReport(
                "BinnedTV", binned_tv(emp, joint_ref), samples, bins_eff,
                math.sqrt(bins_eff * bins_eff / samples),
                "joint law on lattice-snapped bins vs stationary quadrature"))
        return TiltConvergenceRow(model.lam, H, N, tuple(reports))

    return _fan_out(worker, list(enumerate(models)), threads)


# ---------------------------------------------------------------------------
# mixing experiment

@dataclass(frozen=True)
class MixingRow:
    K: float
    tv: float
    noise_floor: float
    marginal_tv: float
    joint_tv: float


@dataclass(frozen=True)
class MixingReport:
    rows: tuple
    slope: float
    intercept: float
    inconclusive: bool
    method: str


def mixing_experiment(model, T_window: float, K_values, endpoint_pairs, *,
                      samples: int = 0, seed: int = 0, bins: int = 40,
                      edge: float = 4.0, horizon_boost: float = 1.0,
                      threads: int = 1) -> MixingReport:
    """Central-window agreement of two bridges vs the buffer length K.

    Both bridges cover rescaled time [-(K+T), K+T] around the window
    [-T, T]; the second additionally gets horizon_boost extra rescaled
    time per side and its own endpoint pair, so the comparison probes
    insensitivity to boundary data.  The window law is summarized by
    the time-0 marginal together with the (-T, +T) two-time joint; tv
    is the larger of the two distances (a lower bound on the window
    TV).  samples=0 compares exact DP laws (noise floor zero);
    otherwise each law is estimated from that many exact draws and
    binned over [0, edge] rescaled.  log tv is fitted affinely in K;
    the run is flagged inconclusive when the noise floor exceeds half
    the smallest tv or fewer than two tv values are positive.
    """
    if model.scale is None:
        raise ValidationError("mixing experiment needs a tilted model")
    if T_window <= 0:
        raise ValidationError("T_window must be positive")
    ks = [float(k) for k in K_values]
    if not ks or any(b <= a for a, b in zip(ks, ks[1:])) or ks[0] <= 0:
        raise ValidationError("K values must be positive and increasing")
    try:
        (ua, va), (ub, vb) = endpoint_pairs
    except (TypeError, ValueError):
        raise ValidationError("endpoint_pairs must hold two (u, v) pairs")
    for pts in (ua, va, ub, vb):
        model.validate_sites(pts)
    H = model.scale.H
    sig = math.sqrt(model.step.sigma2)
    W = max(1, int(round(T_window * H * H)))
    boost = int(round(horizon_boost * H * H))

    def exact_worker(K):
        M = max(1, int(round(K * H * H)))
        Na, ca = 2 * (M + W), M + W
        Nb, cb = Na + 2 * boost, M + W + boost
        pa = bridge_marginal(model, ua, va, Na, ca)
        pb = bridge_marginal(model, ub, vb, Nb, cb)
        tv_m = 0.5 * float(np.abs(pa - pb).sum())
        ja = bridge_two_time(model, ua, va, Na, ca - W, ca + W)
        jb = bridge_two_time(model, ub, vb, Nb, cb - W, cb + W)
        tv_j = 0.5 * float(np.abs(ja - jb).sum())
        return MixingRow(K, max(tv_m, tv_j), 0.0, tv_m, tv_j)

    def sampled_worker(item):
        k_idx, K = item
        M = max(1, int(round(K * H * H)))
        Na, ca = 2 * (M + W), M + W
        Nb, cb = Na + 2 * boost, M + W + boost
        ea = sample_exact(model, ua, va, Na, samples, seed + 2 * k_idx)
        eb = sample_exact(model, ub, vb, Nb, samples, seed + 2 * k_idx + 1)
        xa = ea.paths[:, :, -1] / (sig * H)
        xb = eb.paths[:, :, -1] / (sig * H)
        tv_m = binned_tv(_hist_1d(xa[:, ca], bins, edge),
                         _hist_1d(xb[:, cb], bins, edge))
        tv_j = binned_tv(_clip_hist_2d(xa[:, ca - W], xa[:, ca + W], bins, edge),
                         _clip_hist_2d(xb[:, cb - W], xb[:, cb + W], bins, edge))
        tv = max(tv_m, tv_j)
        floor = math.sqrt((bins * bins if tv_j >= tv_m else bins) / samples)
        return MixingRow(K, tv, floor, tv_m, tv_j)

    if samples == 0:
        rows = _fan_out(exact_worker, ks, threads)
    else:
        if samples < 100:
            raise ValidationError("need at least 100 samples per bridge")
        rows = _fan_out(sampled_worker, list(enumerate(ks)), threads)

    pos = [(r.K, r.tv) for r in rows if r.tv > 0]
    if len(pos) >= 2:
        slope, intercept = np.polyfit([p[0] for p in pos],
                                      [math.log(p[1]) for p in pos], 1)
    else:
        slope, intercept = float("nan"), float("nan")
    floor_max = max(r.noise_floor for r in rows)
    tv_min = min(r.tv for r in rows)
    inconclusive = len(pos) < 2 or floor_max > 0.5 * tv_min
    return MixingReport(tuple(rows), float(slope), float(intercept),
                        inconclusive, "exact" if samples == 0 else "sampled")


# ---------------------------------------------------------------------------
# lattice-to-continuum embedding

@dataclass(frozen=True)
class StepFunction:
    """Piecewise-constant extension of site values: site k owns the cell
    [(k - 1/2) h, (k + 1/2) h); zero outside the covered range."""

    values: tuple
    spacing: float

    def __call__(self, r):
        rr = np.asarray(r, dtype=float)
        idx = np.floor(rr / self.spacing + 0.5).astype(int)
        out = np.zeros(rr.shape)
        ok = (idx >= 1) & (idx <= len(self.values)) & (rr >= 0)
        vals = np.asarray(self.values)
        out[ok] = vals[idx[ok] - 1]
        if np.isscalar(r):
            return float(out)
        return out


def discrete_continuum_embedding(f_lattice, scale: float) -> StepFunction:
    """Extend site values (site k at k * scale, k = 1, 2, ...) to R+."""
    vals = np.asarray(f_lattice, dtype=float)
    if vals.ndim != 1 or vals.size == 0:
        raise ValidationError("lattice values must form a nonempty vector")
    if not (scale > 0 and math.isfinite(scale)):
        raise ValidationError("scale must be a positive spacing")
    return StepFunction(tuple(float(v) for v in vals), float(scale))


def lattice_projection(f, scale: float, num_sites: int,
                       panels: int = 16) -> np.ndarray:
    """Cell averages of a continuum function at sites 1..num_sites.

    The averaging direction of the embedding pair; an L2 contraction
    from the covered interval onto the lattice.
    """
    if num_sites < 1:
        raise ValidationError("need at least one site")
    if not (scale > 0 and math.isfinite(scale)):
        raise ValidationError("scale must be a positive spacing")
    k = np.arange(1, num_sites + 1)[:, None]
    offs = (np.arange(panels) + 0.5)[None, :] / panels - 0.5
    pts = (k + offs) * scale
    return np.asarray(f(pts.ravel()), dtype=float).reshape(
        num_sites, panels).mean(axis=1)


def modulus_summary(rescaled, delta: float, quantile: float = 0.95) -> float:
    """Per-path modulus of continuity at gap delta, summarized by a
    quantile over all paths and walks.

    Evaluated on the stored time grid, which is exact for the maximum
    over knot pairs of the piecewise-linear ensemble.
    """
    times = rescaled.times
    values = rescaled.values
    if not 0 < delta <= float(times[-1] - times[0]):
        raise ValidationError("delta must lie within the time range")
    step = float(times[1] - times[0])
    w = max(1, int(round(delta / step)))
    count, _, walks = values.shape
    flat = values.transpose(0, 2, 1).reshape(count * walks, -1)
    sw = np.lib.stride_tricks.sliding_window_view(flat, w + 1, axis=1)
    mods = (sw.max(axis=2) - sw.min(axis=2)).max(axis=1)
    return float(np.quantile(mods, quantile))
