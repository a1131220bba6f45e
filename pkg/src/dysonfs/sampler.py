"""Trajectory samplers for the tilted ordered-walk measure.

sample_exact draws i.i.d. paths by backward dynamic programming: with
partition tables Z_j(x -> v) in hand, the time-j transition law is
w(x -> y) Z_{j+1}(y) / Z_j(x), so every draw has the exact polymer law.
sample_mcmc runs single-site Metropolis or heat-bath sweeps targeting the
same measure at scales where the tables do not fit.

Randomness is counter-based (Philox) keyed by the user seed, with
parallel chains on spawned independent streams; identical inputs give
bit-identical ensembles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ResourceError, ValidationError
from .lattice import WalkModel, _step_tensor, _tuple_masks

_STATE_BUDGET = 50_000_000
_PROPOSALS = ("single_site", "heat_bath")


@dataclass(frozen=True)
class McmcConfig:
    sweeps: int
    burn_in: int | None = None  # None resolves to 10 * N * n at run time
    thinning: int = 1
    proposal: str = "single_site"

    def __post_init__(self):
        if self.proposal not in _PROPOSALS:
            raise ValidationError(f"proposal must be one of {_PROPOSALS}")
        if self.sweeps < 1:
            raise ValidationError("sweeps must be >= 1")
        if self.burn_in is not None and not 0 <= self.burn_in < self.sweeps:
            raise ValidationError("need sweeps > burn_in >= 0")
        if self.thinning < 1:
            raise ValidationError("thinning must be >= 1")


class PathEnsemble:
    """Immutable bundle of sampled trajectories.

    paths has shape (count, N+1, n); every row satisfies the model's
    ordering constraint at every time and hits the configured endpoints.
    """

    def __init__(self, model: WalkModel, paths: np.ndarray, u_set, v_set,
                 seed: int, sampler_kind: str):
        paths = np.asarray(paths)
        if paths.ndim != 3 or paths.shape[2] != model.n:
            raise ValidationError("paths must have shape (count, N+1, n)")
        if paths.shape[0] == 0:
            raise ValidationError("empty ensemble")
        if np.any(paths < model.site_min) or np.any(paths > model.x_max):
            raise ValidationError("path leaves the site box")
        d = np.diff(paths, axis=2)
        if model.n > 1:
            ok = np.all(d > 0) if model.ordering == "strict" else np.all(d >= 0)
            if not ok:
                raise ValidationError("path violates the ordering constraint")
        starts = {tuple(int(x) for x in p) for p in paths[:, 0, :]}
        ends = {tuple(int(x) for x in p) for p in paths[:, -1, :]}
        if not starts <= {tuple(q) for q in u_set}:
            raise ValidationError("path start outside the endpoint set")
        if not ends <= {tuple(q) for q in v_set}:
            raise ValidationError("path end outside the endpoint set")
        self.model = model
        self.paths = paths
        self.u_set = tuple(tuple(int(x) for x in q) for q in u_set)
        self.v_set = tuple(tuple(int(x) for x in q) for q in v_set)
        self.seed = int(seed)
        self.sampler_kind = sampler_kind

    @property
    def count(self) -> int:
        return self.paths.shape[0]

    @property
    def horizon(self) -> int:
        return self.paths.shape[1] - 1


def default_endpoints(model: WalkModel) -> tuple:
    """(1, 2, ..., n) spaced by ceil(H/2): inside the C*H ceiling with C=n."""
    if model.scale is None:
        raise ValidationError("default endpoints need a potential (they scale with H)")
    a = max(1, math.ceil(model.scale.H / 2.0))
    return tuple(a * (i + 1) for i in range(model.n))


def _as_site_set(model: WalkModel, pts) -> list:
    """Accept one site tuple or an iterable of them; validate each."""
    if isinstance(pts, (list, set, frozenset)) or (
            isinstance(pts, tuple) and len(pts) > 0
            and isinstance(pts[0], (tuple, list, np.ndarray))):
        out = [tuple(int(x) for x in model.validate_sites(p)) for p in pts]
        if not out:
            raise ValidationError("empty endpoint set")
        if len(set(out)) != len(out):
            raise ValidationError("duplicate endpoints in set")
        return out
    return [tuple(int(x) for x in model.validate_sites(pts))]


def _offset_combos(model: WalkModel):
    """All joint step proposals: offsets (K, n) and probabilities (K,)."""
    offs = np.asarray(model.step.offsets)
    prs = np.asarray(model.step.probs)
    n = model.n
    grids = np.meshgrid(*([np.arange(offs.size)] * n), indexing="ij")
    combo = np.stack([g.reshape(-1) for g in grids], axis=1)
    return offs[combo], np.prod(prs[combo], axis=1)


def backward_tables(model: WalkModel, v_set, N: int):
    """Masked partition tensors B_j(x) = Z(x at time j -> v at N).

    Each layer is rescaled to max 1 (scales cancel in the per-state
    transition normalization) and already has the interior ordering
    constraint applied, so sampling can use B_{j+1} directly.
    """
    n = model.n
    S = model.sites.size
    if (N + 1) * S ** n > _STATE_BUDGET:
        raise ResourceError("backward table memory exceeds the budget")
    mask = _tuple_masks(model, "ordered") if n > 1 else None
    tilt = model.site_weights
    offs = np.asarray(model.step.offsets)
    prs = np.asarray(model.step.probs)
    B = np.zeros((S,) * n)
    for v in v_set:
        B[tuple(int(x) - model.site_min for x in v)] = 1.0
    layers = [None] * (N + 1)
    layers[N] = B
    for j in range(N - 1, -1, -1):
        prev = layers[j + 1]
        cur = prev
        for axis in range(n):
            moved = np.moveaxis(cur, axis, 0)
            out = np.zeros_like(moved)
            for z, p in zip(offs, prs):
                # back-step: B_j(x) pulls from B_{j+1}(x + z) tilted at x + z
                lo, hi = max(0, -z), min(S, S - z)
                if lo < hi:
                    shaped = tilt[lo + z:hi + z].reshape(
                        (hi - lo,) + (1,) * (n - 1))
                    out[lo:hi] += p * shaped * moved[lo + z:hi + z]
            cur = np.moveaxis(out, 0, axis)
        if mask is not None and j >= 1:
            cur = np.where(mask, cur, 0.0)
        m = float(cur.max())
        if m > 0:
            cur = cur / m
        layers[j] = cur
    return layers


def forward_tables(model: WalkModel, u_set, N: int):
    """Occupation tensors F_j(x) = Z(u at 0 -> x at j), layer-rescaled.

    Same masking convention as backward_tables, so F_j * B_j is (up to
    one overall constant) the time-j state law of the bridge.
    """
    n = model.n
    S = model.sites.size
    if (N + 1) * S ** n > _STATE_BUDGET:
        raise ResourceError("forward table memory exceeds the budget")
    mask = _tuple_masks(model, "ordered") if n > 1 else None
    F = np.zeros((S,) * n)
    for q in u_set:
        F[tuple(int(x) - model.site_min for x in q)] = 1.0
    layers = [F]
    for j in range(1, N + 1):
        cur = _step_tensor(model, layers[-1])
        if mask is not None and j <= N - 1:
            cur = np.where(mask, cur, 0.0)
        m = float(cur.max())
        if m > 0:
            cur = cur / m
        layers.append(cur)
    return layers


def bridge_marginal(model: WalkModel, u, v, N: int, j: int) -> np.ndarray:
    """Time-j state distribution of the bridge, as a (S,)*n tensor."""
    if not 0 <= j <= N:
        raise ValidationError("time index outside the horizon")
    u_set = _as_site_set(model, u)
    v_set = _as_site_set(model, v)
    F = forward_tables(model, u_set, j)[j] if j > 0 else None
    B = backward_tables(model, v_set, N)[j]
    if F is None:
        joint = np.zeros_like(B)
        for q in u_set:
            idx = tuple(int(x) - model.site_min for x in q)
            joint[idx] = B[idx]
    else:
        joint = F * B
    tot = joint.sum()
    if tot <= 0:
        raise ValidationError("no admissible path connects the endpoints")
    return joint / tot


def bridge_two_time(model: WalkModel, u, v, N: int, j1: int, j2: int) -> np.ndarray:
    """Joint law of the time-j1 and time-j2 states, shape (S,)*n + (S,)*n."""
    if not 0 < j1 < j2 < N:
        raise ValidationError("need interior times 0 < j1 < j2 < N")
    u_set = _as_site_set(model, u)
    v_set = _as_site_set(model, v)
    n = model.n
    S = model.sites.size
    if S ** (2 * n) * (j2 - j1) > _STATE_BUDGET:
        raise ResourceError("two-time joint exceeds the state budget")
    mask = _tuple_masks(model, "ordered") if n > 1 else None
    F = forward_tables(model, u_set, j1)[j1]
    if mask is not None:
        F = np.where(mask, F, 0.0)
    B = backward_tables(model, v_set, N - j2)[0]
    # propagate each time-j1 state through the window, masked at every
    # interior time; no per-row rescaling, the rows must share one scale
    flatF = F.reshape(-1)
    joint = np.zeros((S ** n, S ** n))
    for a in np.nonzero(flatF > 0)[0]:
        ten = np.zeros((S,) * n)
        ten.reshape(-1)[a] = 1.0
        for k in range(j1 + 1, j2 + 1):
            ten = _step_tensor(model, ten)
            if mask is not None:
                ten = np.where(mask, ten, 0.0)
        joint[a, :] = flatF[a] * ten.reshape(-1) * B.reshape(-1)
    tot = joint.sum()
    if tot <= 0:
        raise ValidationError("no admissible path connects the endpoints")
    return (joint / tot).reshape((S,) * n + (S,) * n)


def sample_exact(model: WalkModel, u, v, N: int, count: int, seed: int,
                 batch: int = 20000) -> PathEnsemble:
    """Draw count i.i.d. trajectories with the exact tilted ordered law."""
    if N < 1:
        raise ValidationError("N must be >= 1")
    if count < 1:
        raise ValidationError("count must be >= 1")
    u_set = _as_site_set(model, u)
    v_set = _as_site_set(model, v)
    layers = backward_tables(model, v_set, N)
    start_w = np.array([
        layers[0][tuple(int(x) - model.site_min for x in q)] for q in u_set])
    if start_w.sum() <= 0.0:
        raise ValidationError("no admissible path connects the endpoints")
    n = model.n
    S = model.sites.size
    combo_offs, combo_p = _offset_combos(model)
    K = combo_p.size
    strides = np.array([S ** (n - 1 - i) for i in range(n)])
    flat_layers = [b.reshape(-1) for b in layers]
    tilt = model.site_weights
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    out = np.empty((count, N + 1, n), dtype=np.int64)
    done = 0
    while done < count:
        m = min(batch, count - done)
        if len(u_set) == 1:
            cur = np.tile(np.asarray(u_set[0], dtype=np.int64), (m, 1))
        else:
            pick = rng.choice(len(u_set), size=m, p=start_w / start_w.sum())
            cur = np.asarray(u_set, dtype=np.int64)[pick]
        out[done:done + m, 0, :] = cur
        for j in range(N):
            cand = cur[:, None, :] + combo_offs[None, :, :]  # (m, K, n)
            valid = np.all((cand >= model.site_min) & (cand <= model.x_max),
                           axis=2)
            idx = np.clip(cand - model.site_min, 0, S - 1) @ strides
            w = combo_p[None, :] * flat_layers[j + 1][idx]
            w = w * np.prod(tilt[np.clip(cand - model.site_min, 0, S - 1)],
                            axis=2)
            w = np.where(valid, w, 0.0)
            tot = w.sum(axis=1, keepdims=True)
            if np.any(tot <= 0):
                raise ValidationError("stranded state during exact sampling")
            cum = np.cumsum(w, axis=1)
            r = rng.random(m) * cum[:, -1]
            choice = (r[:, None] >= cum).sum(axis=1)
            cur = cand[np.arange(m), choice, :]
            out[done:done + m, j + 1, :] = cur
        done += m
    return PathEnsemble(model, out, u_set, v_set, seed, "exact_dp")


def _initial_path(model: WalkModel, u, v, N: int) -> np.ndarray:
    """Deterministic admissible configuration, or raise if none is found.

    Interpolates each walk linearly, clamps to forward/backward
    reachability and the box, fixes the step parity where the law forces
    it, then pushes walks apart bottom-up to restore the ordering.
    """
    n = model.n
    offs = [z for z, p in zip(model.step.offsets, model.step.probs) if p > 0]
    lo_off, hi_off = min(offs), max(offs)
    period = model.step.period
    X = np.zeros((N + 1, n), dtype=np.int64)
    X[0] = u
    X[N] = v
    gap = 1 if model.ordering == "strict" else 0
    for j in range(1, N):
        for l in range(n):
            tgt = int(round(u[l] + (v[l] - u[l]) * j / N))
            lo = max(model.site_min, X[j - 1, l] + lo_off,
                     v[l] - (N - j) * hi_off)
            hi = min(model.x_max, X[j - 1, l] + hi_off, v[l] - (N - j) * lo_off)
            if l > 0:
                lo = max(lo, X[j, l - 1] + gap)
            x = min(max(tgt, lo), hi)
            if period == 2 and (x - X[j - 1, l]) % 2 != abs(lo_off) % 2:
                # +-1 style walks flip parity every step
                for cand in (x + 1, x - 1):
                    if lo <= cand <= hi:
                        x = cand
                        break
            X[j, l] = x
        bad = (np.diff(X[j]) < gap) if n > 1 else np.array([False])
        if np.any(bad) or X[j, 0] < model.site_min or X[j, -1] > model.x_max:
            raise ValidationError("no admissible initial configuration found")
    _check_config(model, X, u, v)
    return X


def _check_config(model: WalkModel, X: np.ndarray, u, v) -> None:
    offs = set(z for z, p in zip(model.step.offsets, model.step.probs) if p > 0)
    steps = np.diff(X, axis=0)
    if not set(np.unique(steps).tolist()) <= offs:
        raise ValidationError("no admissible initial configuration found")
    if model.n > 1:
        d = np.diff(X, axis=1)
        ok = np.all(d > 0) if model.ordering == "strict" else np.all(d >= 0)
        if not ok:
            raise ValidationError("no admissible initial configuration found")


def _prob_lookup(model: WalkModel) -> tuple:
    offs = np.asarray(model.step.offsets)
    lo = int(offs.min())
    hi = int(offs.max())
    table = np.zeros(hi - lo + 1)
    for z, p in zip(model.step.offsets, model.step.probs):
        table[z - lo] = p
    return table, lo


def _site_prob(table, lo, delta):
    d = np.asarray(delta) - lo
    ok = (d >= 0) & (d < table.size)
    return np.where(ok, table[np.clip(d, 0, table.size - 1)], 0.0)


class _McmcState:
    """Vectorized sweep kernel over a batch of configurations.

    Sites at the same time parity are conditionally independent given the
    rest, so each sweep is four vectorized half-updates (two parities,
    walks in turn), which keeps detailed balance site by site.
    """

    def __init__(self, model: WalkModel, configs: np.ndarray, rng):
        self.model = model
        self.X = configs  # (batch, N+1, n)
        self.rng = rng
        self.table, self.table_lo = _prob_lookup(model)
        self.delta = model.step.period  # unit move that can be admissible
        self.gap = 1 if model.ordering == "strict" else 0

    def _bounds(self, j_idx, l):
        X = self.X
        n = self.model.n
        lo = np.full(X[:, j_idx, l].shape, self.model.site_min)
        hi = np.full(X[:, j_idx, l].shape, self.model.x_max)
        if l > 0:
            lo = np.maximum(lo, X[:, j_idx, l - 1] + self.gap)
        if l < n - 1:
            hi = np.minimum(hi, X[:, j_idx, l + 1] - self.gap)
        return lo, hi

    def metropolis_half_sweep(self, parity: int) -> None:
        X = self.X
        N = X.shape[1] - 1
        j_idx = np.arange(1 + ((1 + parity) % 2), N, 2)
        if j_idx.size == 0:
            return
        tilt = self.model.site_weights
        smin = self.model.site_min
        for l in range(self.model.n):
            cur = X[:, j_idx, l]
            sign = np.where(self.rng.random(cur.shape) < 0.5, 1, -1)
            prop = cur + sign * self.delta
            lo, hi = self._bounds(j_idx, l)
            prev = X[:, j_idx - 1, l]
            nxt = X[:, j_idx + 1, l]
            num = (_site_prob(self.table, self.table_lo, prop - prev)
                   * _site_prob(self.table, self.table_lo, nxt - prop)
                   * tilt[np.clip(prop - smin, 0, tilt.size - 1)])
            den = (_site_prob(self.table, self.table_lo, cur - prev)
                   * _site_prob(self.table, self.table_lo, nxt - cur)
                   * tilt[cur - smin])
            ok = (prop >= lo) & (prop <= hi) & (den > 0)
            ratio = np.where(ok, num / np.where(den > 0, den, 1.0), 0.0)
            acc = self.rng.random(cur.shape) < ratio
            X[:, j_idx, l] = np.where(acc, prop, cur)

    def heat_bath_half_sweep(self, parity: int) -> None:
        X = self.X
        N = X.shape[1] - 1
        j_idx = np.arange(1 + ((1 + parity) % 2), N, 2)
        if j_idx.size == 0:
            return
        tilt = self.model.site_weights
        smin = self.model.site_min
        offs = np.asarray(self.model.step.offsets)
        span = np.arange(int(offs.min()), int(offs.max()) + 1)
        for l in range(self.model.n):
            prev = X[:, j_idx - 1, l]
            nxt = X[:, j_idx + 1, l]
            lo, hi = self._bounds(j_idx, l)
            cand = prev[..., None] + span[None, None, :]
            w = (_site_prob(self.table, self.table_lo, cand - prev[..., None])
                 * _site_prob(self.table, self.table_lo, nxt[..., None] - cand)
                 * tilt[np.clip(cand - smin, 0, tilt.size - 1)])
            w = np.where((cand >= lo[..., None]) & (cand <= hi[..., None]), w, 0.0)
            tot = w.sum(axis=-1, keepdims=True)
            # a site with no admissible value keeps its current height
            safe = tot[..., 0] > 0
            cum = np.cumsum(w, axis=-1)
            r = self.rng.random(prev.shape) * np.where(safe, cum[..., -1], 1.0)
            choice = (r[..., None] >= cum).sum(axis=-1)
            new = np.take_along_axis(cand, choice[..., None], axis=-1)[..., 0]
            X[:, j_idx, l] = np.where(safe, new, X[:, j_idx, l])

    def sweep(self, proposal: str) -> None:
        for parity in (1, 0):
            if proposal == "single_site":
                self.metropolis_half_sweep(parity)
            else:
                self.heat_bath_half_sweep(parity)


def sample_mcmc(model: WalkModel, u, v, N: int, config: McmcConfig,
                seed: int) -> PathEnsemble:
    """Markov-chain sampling of the same target; kept states are the
    post-burn-in configurations every `thinning` sweeps."""
    u_set = _as_site_set(model, u)
    v_set = _as_site_set(model, v)
    if len(u_set) != 1 or len(v_set) != 1:
        raise ValidationError("mcmc sampling needs fixed endpoints")
    burn = config.burn_in if config.burn_in is not None else 10 * N * model.n
    if burn >= config.sweeps:
        raise ValidationError("need sweeps > burn_in")
    X0 = _initial_path(model, u_set[0], v_set[0], N)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    state = _McmcState(model, X0[None, :, :].copy(), rng)
    kept = []
    for s in range(config.sweeps):
        state.sweep(config.proposal)
        if s >= burn and (s - burn) % config.thinning == 0:
            kept.append(state.X[0].copy())
    return PathEnsemble(model, np.stack(kept), u_set, v_set, seed, "mcmc")


def mcmc_sweep_ensemble(ensemble: PathEnsemble, sweeps: int, seed: int,
                        proposal: str = "heat_bath") -> PathEnsemble:
    """Apply MCMC sweeps to every path of an ensemble in parallel.

    With exact input samples this is an invariance check: the output is
    another (correlated) sample of the same law.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    state = _McmcState(ensemble.model, ensemble.paths.copy(), rng)
    for _ in range(sweeps):
        state.sweep(proposal)
    return PathEnsemble(ensemble.model, state.X, ensemble.u_set,
                        ensemble.v_set, seed, "mcmc")


class RescaledPaths:
    """Piecewise-linear trajectories: space over sigma*H, time over H^2."""

    def __init__(self, times: np.ndarray, values: np.ndarray, H: float,
                 sigma: float):
        self.times = times
        self.values = values  # (count, N+1, n)
        self.H = H
        self.sigma = sigma

    def at(self, t: float) -> np.ndarray:
        """Linear interpolation at rescaled time t, shape (count, n)."""
        tmax = self.times[-1]
        if not 0.0 <= t <= tmax:
            raise ValidationError(f"t={t} outside [0, {tmax}]")
        pos = t / (self.times[1] - self.times[0])
        k = min(int(math.floor(pos)), self.values.shape[1] - 2)
        frac = pos - k
        return (1.0 - frac) * self.values[:, k, :] + frac * self.values[:, k + 1, :]


def rescale(ensemble: PathEnsemble) -> RescaledPaths:
    model = ensemble.model
    if model.scale is None:
        raise ValidationError("rescaling needs the potential's height scale H")
    H = model.scale.H
    sigma = math.sqrt(model.step.sigma2)
    times = np.arange(ensemble.paths.shape[1]) / (H * H)
    values = ensemble.paths.astype(float) / (sigma * H)
    return RescaledPaths(times, values, H, sigma)
