"""Chamber harmonic polynomials and conditioned-exit Monte Carlo.

Three classical reflection chambers with their alternating harmonic
polynomials:

  A: x_1 < ... < x_n            u_A = prod_{i<j} (x_j - x_i)
  C: 0 < x_1 < ... < x_n        u_C = prod_k x_k * prod_{i<j} (x_j^2 - x_i^2)
  D: |x_1| < x_2 < ... < x_n    u_D = prod_{i<j} (x_j^2 - x_i^2)

Each u is positive on the open chamber, vanishes on its walls, and is
annihilated by the Laplacian.  ``meander_exit_check`` simulates
Gaussian-increment walks over unit time conditioned by rejection to stay
in a type-C chamber and compares the surviving endpoint law with the
density proportional to u_C(x) exp(-|x|^2 / 2), the small-start limit law
(Rayleigh when n = 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .determinantal import ordered_cell_fractions
from .errors import ResourceError, ValidationError
from .stats import ComparisonReport, binned_tv

_KINDS = ("A", "C", "D")
# rejection bookkeeping: walkers are pruned after these step counts so the
# (dominant) early deaths never pay for a full path
_STAGE_CUTS = (8, 32, 96)
_BATCH = 200_000
_MIN_ATTEMPTS = 4_000_000
_RATE_FLOOR = 1e-5
_ATTEMPT_CAP = 500_000_000


@dataclass(frozen=True)
class ChamberKind:
    kind: str
    n: int

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValidationError(f"chamber kind must be one of {_KINDS}")
        if not isinstance(self.n, int) or self.n < 1:
            raise ValidationError("chamber dimension must be a positive integer")


def _coords(chamber: ChamberKind, x) -> np.ndarray:
    c = np.asarray(x, dtype=float)
    if c.shape != (chamber.n,):
        raise ValidationError(
            f"expected {chamber.n} coordinates, got shape {c.shape}")
    return c


def contains(chamber: ChamberKind, x) -> bool:
    """Membership in the open chamber."""
    c = _coords(chamber, x)
    ordered = bool(np.all(np.diff(c) > 0))
    if chamber.kind == "A":
        return ordered
    if chamber.kind == "C":
        return ordered and c[0] > 0
    if chamber.n == 1:
        return True
    return bool(np.all(np.diff(c[1:]) > 0)) and abs(c[0]) < c[1]


def harmonic(chamber: ChamberKind, x) -> float:
    """The chamber's alternating polynomial u_W; defined on all of R^n."""
    c = _coords(chamber, x)
    lo, hi = np.triu_indices(chamber.n, 1)
    if chamber.kind == "A":
        return float(np.prod(c[hi] - c[lo]))
    sq = c * c
    pairs = float(np.prod(sq[hi] - sq[lo]))
    if chamber.kind == "D":
        return pairs
    return float(np.prod(c)) * pairs


def harmonicity_residual(chamber: ChamberKind, x, h: float) -> float:
    """Central finite-difference Laplacian of u_W at an interior point.

    The exact Laplacian is zero.  For every chamber the per-axis
    fourth-derivative sum of u_W telescopes to zero as well, so the
    discretization term of the 2n+1-point stencil cancels identically and
    the returned value sits at the floating-point floor eps*|u|/h^2,
    GROWING as h shrinks.  Callers should treat it as a roundoff readout,
    not an O(h^2) truncation estimate.
    """
    c = _coords(chamber, x)
    if not (h > 0):
        raise ValidationError("stencil width must be positive")
    if not contains(chamber, c):
        raise ValidationError("stencil center must lie inside the chamber")
    total = 0.0
    for i in range(chamber.n):
        xp = c.copy()
        xm = c.copy()
        xp[i] += h
        xm[i] -= h
        total += harmonic(chamber, xp) + harmonic(chamber, xm)
    return (total - 2 * chamber.n * harmonic(chamber, c)) / (h * h)


def _alive_in_c(path: np.ndarray) -> np.ndarray:
    """Rows whose every time slice stays in the open type-C chamber."""
    ok = (path[:, :, 0] > 0).all(axis=1)
    for j in range(1, path.shape[2]):
        ok &= (path[:, :, j] > path[:, :, j - 1]).all(axis=1)
    return ok


def exit_reference(n: int, bins: int, edge: float, subcells: int = 5):
    """Bin masses of the normalized u_C * Gaussian density on [0, edge]^n.

    Returns a flat array of bins^n + 1 masses, the trailing slot holding
    everything outside [0, edge]^n.  Quadrature cells subdivide bins
    exactly so no aliasing enters the comparison; mass beyond edge + 3 is
    below the Gaussian tail at that radius and ignored.
    """
    width = edge / bins
    delta = width / subcells
    m = int(math.ceil((edge + 3.0) / delta))
    centers = (np.arange(m) + 0.5) * delta
    if n == 1:
        dens = centers * np.exp(-centers ** 2 / 2.0)
    else:
        axes = np.meshgrid(*([centers] * n), indexing="ij")
        dens = np.ones((m,) * n)
        for a in axes:
            dens = dens * a
        for i in range(n):
            for j in range(i + 1, n):
                dens = dens * (axes[j] ** 2 - axes[i] ** 2)
        rad = sum(a ** 2 for a in axes)
        dens = dens * np.exp(-rad / 2.0) * ordered_cell_fractions(m, n)
    cell_bin = np.minimum(np.arange(m) // subcells, bins)
    out = np.zeros((bins + 1,) * n)
    idx = np.meshgrid(*([cell_bin] * n), indexing="ij") if n > 1 else [cell_bin]
    np.add.at(out, tuple(idx), dens)
    flat = np.concatenate([out[(slice(0, bins),) * n].ravel(),
                           [out.sum() - out[(slice(0, bins),) * n].sum()]])
    return flat / flat.sum()


def _bin_endpoints(final: np.ndarray, bins: int, edge: float) -> np.ndarray:
    n = final.shape[1]
    idx = np.minimum((final / (edge / bins)).astype(int), bins)
    out = np.zeros((bins + 1,) * n)
    np.add.at(out, tuple(idx.T), 1.0)
    flat = np.concatenate([out[(slice(0, bins),) * n].ravel(),
                           [out.sum() - out[(slice(0, bins),) * n].sum()]])
    return flat


def meander_exit_check(chamber: ChamberKind, start, walkers: int, steps: int,
                       seed: int, *, bins: int | None = None,
                       edge: float = 4.0) -> ComparisonReport:
    """Endpoint law of chamber-conditioned walks vs the limit density.

    Walkers take ``steps`` Gaussian increments of variance 1/steps (unit
    total variance over the horizon) from ``start`` and are discarded the
    first time any check point leaves the chamber; surviving endpoints are
    binned on [0, edge]^n plus an overflow slot and compared by total
    variation against the quadrature of u_C(x) exp(-|x|^2/2).  Intended
    for starts near the chamber corner, where the limit law is exact;
    deep starts run fine and show the deviation instead.

    Batches draw from counter-based streams spawned off ``seed``; walker
    rows consume disjoint blocks, so runs are reproducible and walkers
    independent regardless of how many batches the rejection needs.
    """
    if chamber.kind != "C":
        raise ValidationError("exit check is defined for type-C chambers")
    if chamber.n > 3:
        raise ValidationError(
            "rejection conditioning is limited to 3 walkers")
    c0 = _coords(chamber, start)
    if not contains(chamber, c0):
        raise ValidationError("start must lie inside the chamber")
    if walkers < 100:
        raise ValidationError("need at least 100 surviving walkers")
    if steps < 1:
        raise ValidationError("need at least one increment")
    if bins is None:
        bins = {1: 20, 2: 8, 3: 6}[chamber.n]
    if bins < 2 or edge <= 0:
        raise ValidationError("need at least two bins and a positive edge")
    n = chamber.n
    sd = 1.0 / math.sqrt(steps)
    cuts = [c for c in _STAGE_CUTS if c < steps] + [steps]
    start32 = c0.astype(np.float32)
    finals = []
    accepted = 0
    attempts = 0
    batch_index = 0
    while accepted < walkers:
        rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence([seed, batch_index])))
        batch_index += 1
        pos = np.broadcast_to(start32, (_BATCH, n)).copy()
        prev = 0
        for cut in cuts:
            inc = rng.standard_normal((pos.shape[0], cut - prev, n),
                                      dtype=np.float32)
            prev = cut
            np.multiply(inc, np.float32(sd), out=inc)
            np.cumsum(inc, axis=1, out=inc)
            path = pos[:, None, :] + inc
            pos = path[_alive_in_c(path), -1, :]
            if pos.shape[0] == 0:
                break
        attempts += _BATCH
        if pos.shape[0]:
            finals.append(pos.astype(np.float64))
            accepted += pos.shape[0]
        if attempts >= _MIN_ATTEMPTS and accepted < attempts * _RATE_FLOOR:
            raise ResourceError(
                f"conditioning acceptance rate {accepted / attempts:.2e} "
                f"below {_RATE_FLOOR:.0e} after {attempts} attempts")
        if attempts > _ATTEMPT_CAP:
            raise ResourceError(
                f"rejection needs more than {_ATTEMPT_CAP} attempts "
                f"for {walkers} walkers")
    final = np.concatenate(finals)[:walkers]
    emp = _bin_endpoints(final, bins, edge)
    ref = exit_reference(n, bins, edge)
    label = "Rayleigh endpoint density" if n == 1 else \
        "harmonic-times-Gaussian quadrature"
    return ComparisonReport(
        metric="BinnedTV",
        value=binned_tv(emp, ref),
        sample_count=walkers,
        bins=bins,
        noise_floor=math.sqrt(bins ** n / walkers),
        notes=f"chamber C n={n} conditioned exit law vs {label}; "
              f"acceptance {accepted / attempts:.2e}",
    )
