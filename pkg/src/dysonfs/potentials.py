"""Area-tilt potential families and the intrinsic scale H.

A family assigns to every tilt strength lam > 0 a nonnegative increasing
potential V_lam on the half-line.  The scale H = H_lam is the unique
solution of H^2 V_lam(H) = 1; under space/H, time/H^2 rescaling the tilt
sum turns into the integral of the limiting profile q0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .errors import ValidationError

# Largest tilt strength the small-lambda invariants are quoted for.
DEFAULT_LAMBDA0 = 0.1

_BRACKET_LO = 1e-8
_BRACKET_HI = 1e8


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not (lam > 0 and np.isfinite(lam)):
        raise ValidationError(f"tilt strength must be positive and finite, got {lam!r}")
    return lam


class PowerLaw:
    """V_lam(x) = lam * x**alpha with alpha > 0."""

    def __init__(self, alpha: float):
        alpha = float(alpha)
        if not (alpha > 0 and np.isfinite(alpha)):
            raise ValidationError(f"alpha must be positive and finite, got {alpha!r}")
        self.alpha = alpha

    def value(self, lam: float, x):
        lam = _check_lambda(lam)
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise ValidationError("potential domain is x >= 0")
        return lam * np.power(x, self.alpha)

    def tail_exponent(self) -> float:
        return self.alpha

    def __repr__(self) -> str:
        return f"PowerLaw(alpha={self.alpha})"


class Tabulated:
    """V_lam(x) = lam * W(x) for a monotone table of W on a geometric grid.

    W is interpolated by a monotone cubic in log-log coordinates, which
    keeps it increasing and reproduces tabulated power laws exactly.
    Outside the table the end secant slopes continue as power laws, so
    W(0) = 0 and the large-x growth is the last tabulated slope.
    """

    def __init__(self, x, w):
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        if x.ndim != 1 or x.shape != w.shape or x.size < 3:
            raise ValidationError("table needs matching 1-d arrays with >= 3 knots")
        if np.any(x <= 0) or np.any(w <= 0):
            raise ValidationError("table knots and values must be strictly positive")
        if np.any(np.diff(x) <= 0):
            raise ValidationError("table knots must be strictly increasing")
        if np.any(np.diff(w) <= 0):
            raise ValidationError("table values must be strictly increasing")
        ratios = np.diff(np.log(x))
        if np.max(np.abs(ratios - ratios[0])) > 1e-3 * abs(ratios[0]):
            raise ValidationError("table knots must form a geometric grid")
        self._t = np.log(x)
        self._u = np.log(w)
        self._interp = PchipInterpolator(self._t, self._u, extrapolate=False)
        self._slope_lo = (self._u[1] - self._u[0]) / (self._t[1] - self._t[0])
        self._slope_hi = (self._u[-1] - self._u[-2]) / (self._t[-1] - self._t[-2])
        if self._slope_lo <= 0 or self._slope_hi < 0:
            raise ValidationError("table slopes must be positive in log-log scale")

    def value(self, lam: float, x):
        lam = _check_lambda(lam)
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise ValidationError("potential domain is x >= 0")
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        out = np.zeros_like(x)
        pos = x > 0
        t = np.log(x[pos])
        u = np.empty_like(t)
        lo = t < self._t[0]
        hi = t > self._t[-1]
        mid = ~(lo | hi)
        u[mid] = self._interp(t[mid])
        u[lo] = self._u[0] + self._slope_lo * (t[lo] - self._t[0])
        u[hi] = self._u[-1] + self._slope_hi * (t[hi] - self._t[-1])
        out[pos] = np.exp(u)
        out = lam * out
        return out[0] if scalar else out

    def tail_exponent(self) -> float:
        return self._slope_hi

    def __repr__(self) -> str:
        return f"Tabulated({self._t.size} knots, tail slope {self._slope_hi:.4g})"


@dataclass(frozen=True)
class ScaleData:
    """Intrinsic scale of a tilted family at a fixed strength lam.

    H solves H^2 V_lam(H) = 1; h = 1/H is the rescaled lattice spacing.
    q_profile(r) = H^2 V_lam(r H) is the finite-lam rescaled potential and
    q0_profile its small-lam limit r**tail_exponent.
    """

    lam: float
    H: float
    h: float
    tail_exponent: float
    q_profile: Callable[[np.ndarray], np.ndarray]
    q0_profile: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        if not (self.H > 0 and np.isfinite(self.H)):
            raise ValidationError(f"scale must be positive and finite, got {self.H!r}")


def solve_scale(family, lam: float) -> ScaleData:
    """Solve H^2 V_lam(H) = 1 for the intrinsic scale H.

    The map H -> H^2 V_lam(H) is strictly increasing, so the root is
    unique.  The initial bracket [1e-8, 1e8] is doubled outward until it
    straddles the root; failure to bracket is a validation error.

    Returns a ScaleData carrying H to 1e-12 relative accuracy.
    """
    lam = _check_lambda(lam)

    def g(H: float) -> float:
        return H * H * float(family.value(lam, H)) - 1.0

    lo, hi = _BRACKET_LO, _BRACKET_HI
    for _ in range(64):
        if g(lo) <= 0.0:
            break
        lo *= 0.5
    for _ in range(64):
        if g(hi) >= 0.0:
            break
        hi *= 2.0
    if not (g(lo) <= 0.0 <= g(hi)):
        raise ValidationError("could not bracket the scale equation H^2 V(H) = 1")
    H = brentq(g, lo, hi, rtol=1e-14, maxiter=200)
    s = family.tail_exponent()

    def q_profile(r, _H=H, _lam=lam, _family=family):
        return _H * _H * _family.value(_lam, np.asarray(r, dtype=float) * _H)

    def q0_profile(r, _s=s):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValidationError("profile domain is r >= 0")
        return np.power(r, _s)

    return ScaleData(lam=lam, H=H, h=1.0 / H, tail_exponent=s,
                     q_profile=q_profile, q0_profile=q0_profile)


def rescaled_potential(family, scale: ScaleData, r):
    """H^2 V_lam(r H): the tilt seen in rescaled coordinates.

    For PowerLaw(alpha) this equals r**alpha identically in lam.
    """
    r = np.asarray(r, dtype=float)
    return scale.H ** 2 * family.value(scale.lam, r * scale.H)


@dataclass(frozen=True)
class IntegrabilityReport:
    """Truncated value of int_0^inf exp(-kappa q0) dr with a tail bound."""

    value: float
    tail_bound: float
    r_cut: float
    divergent: bool


def check_integrability(scale: ScaleData, kappa: float = 1.0) -> IntegrabilityReport:
    """Integrate exp(-kappa q0(r)) over the half-line.

    The integral is truncated where kappa q0 reaches 40 and the remainder
    is bounded using the secant lower bound on q0.  The report is flagged
    divergent when the integrand's tail decays slower than r**-2, i.e.
    when kappa q0(r) fails to dominate 2 log r at large r.
    """
    kappa = float(kappa)
    if not (kappa > 0 and np.isfinite(kappa)):
        raise ValidationError(f"kappa must be positive and finite, got {kappa!r}")
    q0 = scale.q0_profile

    r_probe = 1e6
    divergent = kappa * float(q0(r_probe)) < 2.0 * np.log(r_probe) + 2.0

    r_cut = 1.0
    for _ in range(60):
        if kappa * float(q0(r_cut)) >= 40.0 or r_cut > 1e9:
            break
        r_cut *= 2.0
    value, _ = quad(lambda r: np.exp(-kappa * float(q0(r))), 0.0, r_cut, limit=200)
    qc = kappa * float(q0(r_cut))
    s = max(scale.tail_exponent, 1e-12)
    # q0(r) >= q0(r_cut) * (r/r_cut)^min(s,1) >= q0(r_cut)(1 + min(s,1)(r-r_cut)/r_cut)
    tail = np.exp(-qc) * r_cut / (min(s, 1.0) * qc) if qc > 0 else np.inf
    return IntegrabilityReport(value=float(value), tail_bound=float(tail),
                               r_cut=float(r_cut), divergent=bool(divergent))
