"""Tilted ordered lattice walks: step laws, transfer operators, and exact
partition functions.

A walk takes integer steps from a finite mean-zero law and pays a weight
exp(-V_lambda(x)) at each visited site, with the starting site untilted.
Walks live on sites 1..x_max (strict mode, wall below 1) or 0..x_max
(non-strict mode, wall at 0).  n-tuples are constrained either to strict
interior ordering (the polymer family) or to pairwise-distinct sites at
every integer time (the non-colliding family of the determinant identity
det[Z^(u_i, v_j)] = sum_sigma sgn(sigma) Z[A^(u, v_sigma)]).

Partition functions use per-step running-max rescaling so deep instances
(N in the thousands) stay inside double range; small instances are left
untouched so exact identities hold bit-for-bit.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import ResourceError, ValidationError
from .potentials import ScaleData, solve_scale

_ENUM_BUDGET = 100_000_000
_DP_BUDGET = 50_000_000
_RESCALE_LO = 1e-140
_RESCALE_HI = 1e140


@dataclass(frozen=True)
class StepLaw:
    """Finite-support mean-zero integer step distribution."""

    offsets: tuple
    probs: tuple

    def __post_init__(self):
        offs = np.asarray(self.offsets, dtype=np.int64)
        pr = np.asarray(self.probs, dtype=float)
        if offs.ndim != 1 or pr.shape != offs.shape or offs.size == 0:
            raise ValidationError("offsets and probs must be matching 1-d tuples")
        if len(set(offs.tolist())) != offs.size:
            raise ValidationError("duplicate step offsets")
        if np.any(pr < 0) or abs(pr.sum() - 1.0) > 1e-12:
            raise ValidationError("probabilities must be >= 0 and sum to 1")
        if abs(float(offs @ pr)) > 1e-12:
            raise ValidationError("step law must have mean zero")
        live = offs[pr > 0]
        if live.size < 2 or live.min() >= 0 or live.max() <= 0:
            raise ValidationError("support must reach both directions")
        if math.gcd(*[abs(int(z)) for z in live if z != 0]) != 1:
            raise ValidationError("support gcd > 1: walk is reducible on a sublattice")
        order = np.argsort(offs)
        object.__setattr__(self, "offsets", tuple(int(z) for z in offs[order]))
        object.__setattr__(self, "probs", tuple(float(p) for p in pr[order]))

    @property
    def sigma2(self) -> float:
        z = np.asarray(self.offsets, dtype=float)
        return float(z * z @ np.asarray(self.probs))

    @property
    def period(self) -> int:
        """gcd of support differences; 2 for the pure +-1 walk, else 1."""
        live = [z for z, p in zip(self.offsets, self.probs) if p > 0]
        diffs = [b - a for a, b in zip(live, live[1:])]
        return math.gcd(*diffs) if len(diffs) > 1 else abs(diffs[0]) if diffs else 0

    @classmethod
    def rademacher(cls) -> "StepLaw":
        return cls((-1, 1), (0.5, 0.5))

    @classmethod
    def lazy(cls) -> "StepLaw":
        return cls((-1, 0, 1), (0.25, 0.5, 0.25))

    @classmethod
    def spread(cls) -> "StepLaw":
        return cls((-2, -1, 0, 1, 2),
                   (1.0 / 12.0, 1.0 / 6.0, 0.5, 1.0 / 6.0, 1.0 / 12.0))


BUILTIN_STEP_LAWS = {
    "rademacher": StepLaw.rademacher,
    "lazy": StepLaw.lazy,
    "spread": StepLaw.spread,
}

_ORDERINGS = ("strict", "nonstrict")


class WalkModel:
    """Immutable model: step law, tilt, walk count, box, and ordering mode.

    potential_family None means V = 0 (used by the exact small-box
    identities).  With a potential present the box must cover the
    fluctuation scale, x_max >= ceil(6 H); pass check_box=False for
    deliberately tiny exact instances.
    """

    def __init__(self, step: StepLaw, n: int, x_max: int, ordering: str = "strict",
                 potential_family=None, lam: float | None = None,
                 check_box: bool = True):
        if ordering not in _ORDERINGS:
            raise ValidationError(f"ordering must be one of {_ORDERINGS}")
        if not (isinstance(n, (int, np.integer)) and n >= 1):
            raise ValidationError("n must be a positive integer")
        if not (isinstance(x_max, (int, np.integer)) and x_max >= 1):
            raise ValidationError("x_max must be a positive integer")
        self.step = step
        self.n = int(n)
        self.x_max = int(x_max)
        self.ordering = ordering
        self.potential_family = potential_family
        if potential_family is not None and lam is None:
            raise ValidationError("lam is required with a potential family")
        self.lam = None if potential_family is None else float(lam)
        self.scale: ScaleData | None = None
        if potential_family is not None:
            self.scale = solve_scale(potential_family, self.lam)
            if check_box and self.x_max < math.ceil(6.0 * self.scale.H):
                raise ValidationError(
                    f"x_max={x_max} below 6 fluctuation scales "
                    f"(need >= {math.ceil(6.0 * self.scale.H)}); "
                    "pass check_box=False for exact small-box instances")
        self.site_min = 0 if ordering == "nonstrict" else 1
        self.sites = np.arange(self.site_min, self.x_max + 1)
        if potential_family is None:
            v = np.zeros(self.sites.size)
        else:
            v = potential_family.value(self.lam, self.sites.astype(float))
        self.site_weights = np.exp(-v)

    def validate_sites(self, pts) -> np.ndarray:
        """Check an endpoint tuple against the box and the ordering mode."""
        a = np.asarray(pts, dtype=np.int64)
        if a.ndim == 0:
            a = a.reshape(1)
        if a.size != self.n:
            raise ValidationError(f"expected {self.n} sites, got {a.size}")
        if np.any(a < self.site_min) or np.any(a > self.x_max):
            raise ValidationError(
                f"sites must lie in [{self.site_min}, {self.x_max}], got {pts}")
        d = np.diff(a)
        if self.ordering == "strict" and np.any(d <= 0):
            raise ValidationError(f"sites must be strictly increasing, got {pts}")
        if self.ordering == "nonstrict" and np.any(d < 0):
            raise ValidationError(f"sites must be non-decreasing, got {pts}")
        return a

    def truncation_diagnostic(self) -> float:
        """Reported truncation-bias bound exp(-integral of the tail decay
        rate sqrt(2 q0) up to the box edge in units of H) times x_max.

        Purely informational; about 1e-8 at the production box multiplier
        of 8 for a linear tail.  No potential means no bias, returns 0.
        """
        if self.scale is None:
            return 0.0
        c_eff = self.x_max / self.scale.H
        rate, _ = quad(lambda r: math.sqrt(2.0 * self.scale.q0_profile(r)),
                       0.0, c_eff, limit=200)
        return float(math.exp(-rate) * self.x_max)


class TransferOperator:
    """Dense one-walk transfer matrix T[x, y] = p_(y-x) exp(-V(y))."""

    def __init__(self, model: WalkModel):
        self.model = model
        S = model.sites.size
        T = np.zeros((S, S))
        for z, p in zip(model.step.offsets, model.step.probs):
            xs = np.arange(S)
            ys = xs + z
            ok = (ys >= 0) & (ys < S)
            T[xs[ok], ys[ok]] = p * model.site_weights[ys[ok]]
        self.matrix = T

    def apply(self, vec: np.ndarray) -> np.ndarray:
        return _step_vector(self.model, vec)


def _step_vector(model: WalkModel, vec: np.ndarray, tilt_after: bool = True) -> np.ndarray:
    """One transfer step: convolve with the step law, then tilt the
    arrival site (tilt_after=False tilts the departure site instead,
    the reversed-walk convention)."""
    src = vec if tilt_after else vec * model.site_weights
    out = np.zeros_like(vec)
    S = vec.size
    for z, p in zip(model.step.offsets, model.step.probs):
        # arrival y = x + z pulls from source at y - z
        lo, hi = max(0, z), min(S, S + z)
        if lo < hi:
            out[lo:hi] += p * src[lo - z:hi - z]
    if tilt_after:
        out = out * model.site_weights
    return out


def _propagate(model: WalkModel, start: int, N: int, tilt_after: bool = True):
    """N transfer steps from a point mass; returns (vector, logscale)."""
    vec = np.zeros(model.sites.size)
    vec[start - model.site_min] = 1.0
    logscale = 0.0
    for _ in range(N):
        vec = _step_vector(model, vec, tilt_after=tilt_after)
        m = float(vec.max())
        if m == 0.0:
            return vec, 0.0
        if m < _RESCALE_LO or m > _RESCALE_HI:
            vec = vec / m
            logscale += math.log(m)
    return vec, logscale


def single_partition(model: WalkModel, u: int, v: int, N: int) -> float:
    """Tilted partition function (T^N)[u, v] over single positive walks."""
    _check_site(model, u)
    _check_site(model, v)
    if N < 0:
        raise ValidationError("N must be >= 0")
    if N == 0:
        return 1.0 if u == v else 0.0
    vec, ls = _propagate(model, u, N)
    return float(vec[v - model.site_min] * math.exp(ls))


def reversed_single_partition(model: WalkModel, u: int, v: int, N: int) -> float:
    """Partition function of the reversed walk (steps negated, tilt on
    sites 0..N-1): equals single_partition(model, v, u, N) exactly."""
    _check_site(model, u)
    _check_site(model, v)
    if N == 0:
        return 1.0 if u == v else 0.0
    rev = WalkModel(
        StepLaw(tuple(-z for z in model.step.offsets), model.step.probs),
        model.n, model.x_max, model.ordering,
        model.potential_family, model.lam, check_box=False)
    vec, ls = _propagate(rev, u, N, tilt_after=False)
    # the final site is untilted under this convention; nothing to undo
    return float(vec[v - rev.site_min] * math.exp(ls))


def _check_site(model: WalkModel, x) -> None:
    if not (isinstance(x, (int, np.integer))):
        raise ValidationError(f"site must be an integer, got {x!r}")
    if not model.site_min <= x <= model.x_max:
        raise ValidationError(
            f"site {x} outside [{model.site_min}, {model.x_max}]")


def _walk_paths(model: WalkModel, start: int, N: int):
    """All single-walk paths of length N from start that stay in the box.

    Returns (positions, weights): positions is (K, N+1) int, weights (K,)
    with the step probabilities and the arrival-site tilts multiplied in.
    """
    offs = np.asarray(model.step.offsets)
    prs = np.asarray(model.step.probs)
    combos = np.stack(np.meshgrid(*([np.arange(offs.size)] * N),
                                  indexing="ij"), axis=-1).reshape(-1, N)
    pos = start + np.cumsum(offs[combos], axis=1)
    pos = np.concatenate([np.full((pos.shape[0], 1), start), pos], axis=1)
    ok = np.all((pos >= model.site_min) & (pos <= model.x_max), axis=1)
    pos = pos[ok]
    combos = combos[ok]
    w = np.prod(prs[combos], axis=1)
    w = w * np.prod(model.site_weights[pos[:, 1:] - model.site_min], axis=1)
    return pos, w


def _order_ok(model: WalkModel, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a < b if model.ordering == "strict" else a <= b


def enumerate_tuple_partition(model: WalkModel, u, v, N: int):
    """Brute-force Z over the ordered family and over every permutation's
    non-colliding family.

    Returns (z_ordered, {sigma: z_noncolliding}) where sigma is a tuple
    sending walk index i to endpoint v[sigma[i]].  Ordering is enforced at
    interior times only; non-collision (pairwise distinct sites) at all
    times 0..N.
    """
    ua = model.validate_sites(u)
    va = model.validate_sites(v)
    n = model.n
    if N < 1:
        raise ValidationError("N must be >= 1 for enumeration")
    k = len(model.step.offsets)
    if k ** (n * N) > _ENUM_BUDGET:
        raise ResourceError(
            f"enumeration of {k}^{n * N} step tuples exceeds the budget")
    paths = [_walk_paths(model, int(s), N) for s in ua]

    def pair_mask(pi, pj, cols, strict_order):
        # (Ki, Kj) mask over the requested time columns
        a = pi[:, cols][:, None, :]
        b = pj[:, cols][None, :, :]
        if strict_order:
            good = _order_ok(model, a, b)
        else:
            good = a != b
        return np.all(good, axis=2)

    interior = np.arange(1, N)
    all_times = np.arange(0, N + 1)

    # ordered family: adjacent-pair interior ordering
    z_ordered = _contract(paths, [(i, i + 1) for i in range(n - 1)],
                          lambda pi, pj: pair_mask(pi, pj, interior, True),
                          [int(x) for x in va])

    z_sigma = {}
    pair_list = [(i, j) for i in range(n) for j in range(i + 1, n)]
    masks = {}
    for (i, j) in pair_list:
        masks[(i, j)] = pair_mask(paths[i][0], paths[j][0], all_times, False)
    for perm in itertools.permutations(range(n)):
        targets = [int(va[perm[i]]) for i in range(n)]
        z_sigma[perm] = _contract(paths, pair_list, lambda pi, pj: None,
                                  targets, premasks=masks)
    return z_ordered, z_sigma


def _contract(paths, pairs, mask_fn, targets, premasks=None):
    """Sum of per-walk weight products over path tuples obeying all pair
    masks, with walk i forced to end at targets[i]."""
    n = len(paths)
    sel_w = []
    sel_idx = []
    for i in range(n):
        pos, w = paths[i]
        keep = pos[:, -1] == targets[i]
        sel_idx.append(np.nonzero(keep)[0])
        sel_w.append(w[keep])
    if any(w.size == 0 for w in sel_w):
        return 0.0
    letters = "abcd"
    operands = []
    spec = []
    for i in range(n):
        operands.append(sel_w[i])
        spec.append(letters[i])
    for (i, j) in pairs:
        M = premasks[(i, j)] if premasks is not None else mask_fn(paths[i][0], paths[j][0])
        operands.append(M[np.ix_(sel_idx[i], sel_idx[j])].astype(float))
        spec.append(letters[i] + letters[j])
    out = np.einsum(",".join(spec) + "->", *operands)
    return float(out)


@dataclass(frozen=True)
class KmReport:
    det: float
    signed_sum: float
    abs_diff: float
    z_ordered: float
    z_identity: float


def verify_km(model: WalkModel, u, v, N: int) -> KmReport:
    """Check det[single-walk partitions] against the signed enumeration sum.

    The report also surfaces the ordered-family Z and the identity
    permutation's non-colliding Z, whose difference is the boundary-time
    and crossing content the determinant does not see.
    """
    ua = model.validate_sites(u)
    va = model.validate_sites(v)
    n = model.n
    M = np.array([[single_partition(model, int(ua[i]), int(va[j]), N)
                   for j in range(n)] for i in range(n)])
    det = float(np.linalg.det(M)) if n > 1 else float(M[0, 0])
    z_ordered, z_sigma = enumerate_tuple_partition(model, u, v, N)
    signed = 0.0
    for perm, z in sorted(z_sigma.items()):
        sign = 1.0 if _perm_parity(perm) == 0 else -1.0
        signed += sign * z
    ident = tuple(range(n))
    return KmReport(det=det, signed_sum=signed, abs_diff=abs(det - signed),
                    z_ordered=z_ordered, z_identity=z_sigma[ident])


def _perm_parity(perm) -> int:
    inv = 0
    for i in range(len(perm)):
        for j in range(i + 1, len(perm)):
            if perm[i] > perm[j]:
                inv += 1
    return inv % 2


def _tuple_masks(model: WalkModel, mode: str) -> np.ndarray:
    S = model.sites.size
    n = model.n
    idx = np.indices((S,) * n)
    mask = np.ones((S,) * n, dtype=bool)
    if mode == "ordered":
        for a in range(n - 1):
            mask &= (idx[a] < idx[a + 1]) if model.ordering == "strict" \
                else (idx[a] <= idx[a + 1])
    elif mode == "distinct":
        for a in range(n):
            for b in range(a + 1, n):
                mask &= idx[a] != idx[b]
    else:
        raise ValidationError(f"unknown tuple mask mode {mode!r}")
    return mask


def _step_tensor(model: WalkModel, ten: np.ndarray) -> np.ndarray:
    """Advance every walk axis one step (conv + arrival tilt, separable)."""
    n = ten.ndim
    S = ten.shape[0]
    tilt = model.site_weights
    for axis in range(n):
        moved = np.moveaxis(ten, axis, 0)
        out = np.zeros_like(moved)
        for z, p in zip(model.step.offsets, model.step.probs):
            lo, hi = max(0, z), min(S, S + z)
            if lo < hi:
                out[lo:hi] += p * moved[lo - z:hi - z]
        out *= tilt.reshape((S,) + (1,) * (n - 1))
        ten = np.moveaxis(out, 0, axis)
    return ten


def _tuple_dp_run(model: WalkModel, u, N: int, mode: str):
    """Forward tensor DP over labeled site tuples.

    mode "ordered" masks interior times 1..N-1 with the ordering
    constraint; mode "distinct" zeroes colliding tuples at every time.
    Returns (final tensor, logscale).
    """
    n = model.n
    if n > 4:
        raise ResourceError("tuple DP supports n <= 4")
    S = model.sites.size
    if S ** n > _DP_BUDGET:
        raise ResourceError(
            f"tuple DP state space {S}^{n} exceeds the budget")
    ua = np.asarray(u, dtype=np.int64)
    mask = _tuple_masks(model, mode)
    ten = np.zeros((S,) * n)
    ten[tuple(int(x) - model.site_min for x in ua)] = 1.0
    logscale = 0.0
    for j in range(1, N + 1):
        ten = _step_tensor(model, ten)
        if mode == "distinct" or j < N:
            ten = np.where(mask, ten, 0.0)
        m = float(ten.max())
        if m == 0.0:
            return ten, 0.0
        if m < _RESCALE_LO or m > _RESCALE_HI:
            ten = ten / m
            logscale += math.log(m)
    return ten, logscale


def tuple_partition_dp(model: WalkModel, u, v, N: int) -> float:
    """Exact ordered-family partition function by forward dynamic
    programming; matches enumerate_tuple_partition on feasible instances."""
    ua = model.validate_sites(u)
    va = model.validate_sites(v)
    if N < 1:
        raise ValidationError("N must be >= 1")
    if model.n == 1:
        return single_partition(model, int(ua[0]), int(va[0]), N)
    ten, ls = _tuple_dp_run(model, ua, N, "ordered")
    val = ten[tuple(int(x) - model.site_min for x in va)]
    return float(val * math.exp(ls))


def permutation_defect(model: WalkModel, u, v, N: int | None = None,
                       t_scale: float | None = None) -> float:
    """(sum over non-identity permutations of |Z_noncolliding| plus
    |Z_noncolliding(id) - Z_ordered|) / Z_ordered, all by tensor DP.

    Give N directly or t_scale to set N = round(t_scale * H^2)."""
    if (N is None) == (t_scale is None):
        raise ValidationError("give exactly one of N or t_scale")
    if N is None:
        if model.scale is None:
            raise ValidationError("t_scale needs a potential (it sets H)")
        N = max(1, int(round(t_scale * model.scale.H ** 2)))
    ua = model.validate_sites(u)
    va = model.validate_sites(v)
    z_p = tuple_partition_dp(model, ua, va, N)
    if z_p <= 0.0:
        raise ValidationError("ordered partition function vanishes")
    ten, ls = _tuple_dp_run(model, ua, N, "distinct")
    n = model.n
    off_mass = 0.0
    z_id = 0.0
    for perm in itertools.permutations(range(n)):
        val = float(ten[tuple(int(va[perm[i]]) - model.site_min
                              for i in range(n))]) * math.exp(ls)
        if perm == tuple(range(n)):
            z_id = val
        else:
            off_mass += abs(val)
    return (off_mass + abs(z_id - z_p)) / z_p
