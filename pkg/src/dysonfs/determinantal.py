"""Slater determinants and determinantal kernels on the ordered chamber.

Built from the lowest n modes of a spectral basis: the Slater determinant
Delta(r) = det[phi_j(r_i)], the Karlin-McGregor kernel
kappa_t(r, s) = det[h_t(r_i, s_j)], its Doob transform
q_t(r, s) = exp(D_n t) kappa_t(r, s) Delta(s) / Delta(r) with
D_n = e_1 + ... + e_n, and the rank-n projection (Fermi) kernel
K_n(r, s) = sum_{l<=n} phi_l(r) phi_l(s).

Chamber integrals use midpoint tensor grids restricted to the ordered
region, with cells straddling the ordering boundary weighted by the
fraction of the cell inside (1/prod of tie-group factorials).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .spectral import SpectralBasis

_MAX_N = 4
_CELL_BUDGET = 20_000_000


def _perm_sign(perm) -> int:
    inv = 0
    for i in range(len(perm)):
        for j in range(i + 1, len(perm)):
            if perm[i] > perm[j]:
                inv += 1
    return -1 if inv % 2 else 1


@dataclass(frozen=True)
class ChamberPoint:
    """A strictly ordered tuple 0 < r_1 < ... < r_n."""

    coords: tuple

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        if c.ndim != 1 or c.size < 1:
            raise ValidationError("chamber point must be a 1-d tuple")
        if not (np.all(c > 0) and np.all(np.diff(c) > 0)):
            raise ValidationError(
                f"coordinates must satisfy 0 < r_1 < ... < r_n, got {self.coords}")
        object.__setattr__(self, "coords", tuple(float(x) for x in c))

    def __len__(self) -> int:
        return len(self.coords)


def _coords(point, n: int | None = None) -> np.ndarray:
    if isinstance(point, ChamberPoint):
        c = np.asarray(point.coords, dtype=float)
    else:
        c = np.asarray(point, dtype=float)
        ChamberPoint(tuple(c))  # validates ordering and positivity
    if n is not None and c.size != n:
        raise ValidationError(f"expected {n} coordinates, got {c.size}")
    return c


def _det_rows(rows: list) -> np.ndarray:
    """Determinant det[rows[i] along axis j] of axis-vector rows.

    Each row is an (m,) array over a shared 1-d grid; the result is the
    n-axis tensor sum_sigma sgn(sigma) prod_j rows[sigma(j)] placed on
    axis j.  For n = 1 this is just the row itself.
    """
    n = len(rows)
    if n == 1:
        return rows[0]
    letters = "abcd"[:n]
    out = None
    for perm in itertools.permutations(range(n)):
        spec = ",".join(letters[j] for j in range(n)) + "->" + letters
        term = np.einsum(spec, *[rows[perm[j]] for j in range(n)])
        out = _perm_sign(perm) * term if out is None else out + _perm_sign(perm) * term
    return out


def _det_matrix(A: np.ndarray) -> float:
    n = A.shape[0]
    if n == 1:
        return float(A[0, 0])
    if n == 2:
        return float(A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0])
    if n == 3:
        return float(A[0, 0] * (A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1])
                     - A[0, 1] * (A[1, 0] * A[2, 2] - A[1, 2] * A[2, 0])
                     + A[0, 2] * (A[1, 0] * A[2, 1] - A[1, 1] * A[2, 0]))
    return float(np.linalg.det(A))


def ordered_cell_fractions(cells: int, n: int) -> np.ndarray:
    """Fraction of each tensor cell inside the ordered region {r1<...<rn}.

    1 on strictly sorted index tuples, 1/prod(g!) across tie groups on
    the diagonal, 0 elsewhere; summing times delta^n integrates the
    ordered simplex of [0, cells*delta]^n exactly.
    """
    idx = np.indices((cells,) * n)
    frac = np.ones((cells,) * n)
    for a in range(n - 1):
        d = idx[a + 1] - idx[a]
        frac = frac * np.where(d > 0, 1.0, np.where(d == 0, 0.5, 0.0))
    if n >= 3:
        # triple and higher ties need 1/g! rather than (1/2)^(g-1)
        for a in range(n - 2):
            triple = (idx[a] == idx[a + 1]) & (idx[a + 1] == idx[a + 2])
            frac = np.where(triple, frac * (2.0 / 3.0), frac)  # 1/4 -> 1/6
    if n == 4:
        # group of four: pairs gave 1/8, triples gave (2/3)^2; land on 1/24
        quad = (idx[0] == idx[1]) & (idx[1] == idx[2]) & (idx[2] == idx[3])
        frac = np.where(quad, frac * 0.75, frac)
    return frac


class SlaterEnsemble:
    """The lowest-n-mode Slater state over a spectral basis.

    Carries D_n (sum of the n lowest eigenvalues), the chamber norm of
    Delta^2 (close to 1 by orthonormality), and the quadrature domain
    r_cut past which the retained modes have decayed to roundoff.
    """

    def __init__(self, basis: SpectralBasis, n: int, norm_cells: int = 200):
        if not 1 <= n <= min(basis.num_modes, _MAX_N):
            raise ValidationError(
                f"n={n} must satisfy 1 <= n <= min(num_modes, {_MAX_N})")
        self.basis = basis
        self.n = int(n)
        self.D_n = float(np.sum(basis.eigenvalues[:n]))
        self.r_cut = self._support_cut()
        self._quad_cache: dict = {}
        centers, weights = self.chamber_grid(norm_cells)
        d2 = self.slater_on_grid(centers) ** 2
        self.norm = float(np.sum(weights * d2))
        if not (self.norm > 0 and np.isfinite(self.norm)):
            raise ValidationError("chamber norm of Delta^2 must be positive finite")
        self._interior_scale = float(np.max(np.abs(self.slater_on_grid(centers))))

    def _support_cut(self) -> float:
        env = np.max(np.abs(self.basis.eigenfunctions[:self.n]), axis=0)
        top = float(np.max(env))
        alive = np.nonzero(env > 1e-13 * top)[0]
        cut = self.basis.grid[alive[-1]] * 1.1 if alive.size else self.basis.config.r_max
        return float(min(cut, self.basis.config.r_max))

    def chamber_grid(self, cells: int):
        """Midpoint centers and ordered-region weights on [0, r_cut]^n.

        Weights are delta^n times the fraction of each tensor cell inside
        the ordered region: 1 on strictly sorted index tuples, 1/prod(g!)
        across tie groups on the diagonal, 0 elsewhere.
        """
        cells = int(min(cells, int(_CELL_BUDGET ** (1.0 / self.n))))
        if cells < 8:
            raise ValidationError("chamber grid too coarse after budget cap")
        if cells in self._quad_cache:
            return self._quad_cache[cells]
        delta = self.r_cut / cells
        centers = (np.arange(cells) + 0.5) * delta
        weights = ordered_cell_fractions(cells, self.n) * delta ** self.n
        self._quad_cache[cells] = (centers, weights)
        return centers, weights

    def phi_rows(self, points: np.ndarray, modes=None) -> np.ndarray:
        return self.basis.phi_at(points, modes=modes)

    def slater_on_grid(self, centers: np.ndarray) -> np.ndarray:
        """Delta evaluated on the tensor grid centers^n (n-axis tensor)."""
        rows = list(self.phi_rows(centers, modes=range(self.n)))
        return _det_rows(rows)

    def slater_raw(self, coords) -> float:
        """det[phi_j(r_i)] with no ordering validation (antisymmetric
        continuation off the chamber); coords must stay in [0, r_max]."""
        c = np.asarray(coords, dtype=float)
        A = self.phi_rows(c, modes=range(self.n)).T  # A[i, j] = phi_j(r_i)
        return _det_matrix(A)

    def heat_rows(self, t: float, r: np.ndarray, centers: np.ndarray) -> np.ndarray:
        """h_t(r_i, centers) for each coordinate of r, shape (n, len(centers))."""
        damps = np.exp(-self.basis.eigenvalues * t)
        pr = self.phi_rows(r)
        pc = self.phi_rows(centers)
        return np.einsum("k,ki,kj->ij", damps, pr, pc)


def slater(ensemble: SlaterEnsemble, point) -> float:
    """Slater determinant Delta at a strictly ordered chamber point."""
    return ensemble.slater_raw(_coords(point, ensemble.n))


def km_kernel(ensemble: SlaterEnsemble, t: float, r, s) -> float:
    """Karlin-McGregor kernel det[h_t(r_i, s_j)]."""
    if not (t > 0 and np.isfinite(t)):
        raise ValidationError(f"t must be positive, got {t!r}")
    rc = _coords(r, ensemble.n)
    sc = _coords(s, ensemble.n)
    H = ensemble.heat_rows(t, rc, sc)  # H[i, j] = h_t(r_i, s_j)
    return _det_matrix(H)


def doob_kernel(ensemble: SlaterEnsemble, t: float, r, s) -> float:
    """Doob-transformed kernel exp(D_n t) kappa_t(r,s) Delta(s)/Delta(r).

    Rows are probability densities over the chamber; r must keep Delta
    clear of the boundary guard 1e-12 times the interior scale.
    """
    rc = _coords(r, ensemble.n)
    sc = _coords(s, ensemble.n)
    dr = ensemble.slater_raw(rc)
    if abs(dr) < 1e-12 * ensemble._interior_scale:
        raise ValidationError(
            "Delta(r) below the boundary guard; Doob ratio is unstable there")
    ds = ensemble.slater_raw(sc)
    kappa = km_kernel(ensemble, t, r, s)
    return float(np.exp(ensemble.D_n * t) * kappa * ds / dr)


def fermi_kernel(ensemble: SlaterEnsemble, r, s) -> np.ndarray:
    """Rank-n projection kernel K_n(r, s) = sum_{l<=n} phi_l(r) phi_l(s).

    r and s are 1-d arrays of points; returns the (len r, len s) matrix.
    """
    pr = ensemble.phi_rows(np.atleast_1d(np.asarray(r, float)), modes=range(ensemble.n))
    ps = ensemble.phi_rows(np.atleast_1d(np.asarray(s, float)), modes=range(ensemble.n))
    return np.einsum("ki,kj->ij", pr, ps)


def level_density(ensemble: SlaterEnsemble, r) -> np.ndarray:
    """Normalized level density K_n(r, r)/n (integrates to 1)."""
    pr = ensemble.phi_rows(np.atleast_1d(np.asarray(r, float)), modes=range(ensemble.n))
    return np.sum(pr * pr, axis=0) / ensemble.n


def doob_row_mass(ensemble: SlaterEnsemble, t: float, r, cells: int = 1200) -> float:
    """Chamber integral of q_t(r, .), equal to 1 up to quadrature error."""
    rc = _coords(r, ensemble.n)
    centers, weights = ensemble.chamber_grid(cells)
    H = ensemble.heat_rows(t, rc, centers)
    kappa = _det_rows(list(H))
    d_tensor = ensemble.slater_on_grid(centers)
    dr = ensemble.slater_raw(rc)
    if abs(dr) < 1e-12 * ensemble._interior_scale:
        raise ValidationError("Delta(r) below the boundary guard")
    q_row = np.exp(ensemble.D_n * t) * kappa * d_tensor / dr
    return float(np.sum(weights * q_row))


def doob_composition_error(ensemble: SlaterEnsemble, s: float, t: float,
                           r, z, cells: int = 1200) -> float:
    """Relative Chapman-Kolmogorov defect of the Doob kernel.

    Integrates q_s(r, w) q_t(w, z) over w on the chamber grid and
    compares with q_{s+t}(r, z).
    """
    rc = _coords(r, ensemble.n)
    zc = _coords(z, ensemble.n)
    centers, weights = ensemble.chamber_grid(cells)
    dr = ensemble.slater_raw(rc)
    dz = ensemble.slater_raw(zc)
    Hs = ensemble.heat_rows(s, rc, centers)
    kappa_s = _det_rows(list(Hs))
    Ht = ensemble.heat_rows(t, zc, centers)  # h_t(w, z) by symmetry of h_t
    kappa_t = _det_rows(list(Ht))
    # in q_s(r, w) q_t(w, z) the Delta(w) factors cancel; integrate with
    # the cancellation done algebraically so the diagonal contributes 0/0-free
    integrand = (np.exp(ensemble.D_n * (s + t)) * kappa_s * kappa_t * dz / dr)
    composed = float(np.sum(weights * integrand))
    direct = doob_kernel(ensemble, s + t, rc, zc)
    return abs(composed - direct) / abs(direct)


def eigenrelation_residual(ensemble: SlaterEnsemble, sub_points: int = 1024) -> float:
    """Relative residual of (sum_i L_i) Delta = -D_n Delta on a sub-grid.

    The n-fold operator sum_i (sigma2/2 d^2/dr_i^2 - q(r_i)) is applied
    to Delta by central differences on a tensor sub-grid strictly coarser
    than the basis grid, so the measured residual is the sub-grid's own
    O(delta^2) truncation error against the continuum relation.  Returns
    ||(L + D_n) Delta||_2 / ||Delta||_2 over interior sub-grid points.
    """
    basis = ensemble.basis
    m = basis.grid.size
    sub_points = min(int(sub_points), int(_CELL_BUDGET ** (1.0 / ensemble.n)))
    stride = max(2, (m + 1) // (sub_points + 1))
    J = (m + 1) // stride - 1
    if J < 5:
        raise ValidationError("sub-grid too coarse for the residual stencil")
    idx = stride * np.arange(1, J + 1) - 1
    delta = stride * basis.dr
    phi = basis.eigenfunctions[:ensemble.n][:, idx]
    qv = basis.q_values[idx]
    # pad the wall value phi(0) = 0 so the first interior stencil is usable
    phi = np.concatenate([np.zeros((ensemble.n, 1)), phi], axis=1)
    qv = np.concatenate([[0.0], qv])
    rows = list(phi)
    D = _det_rows(rows)  # tensor over the padded sub-grid, axis length J+1
    n = ensemble.n
    core = [slice(1, J)] * n  # interior of every axis
    lap = np.zeros(D[tuple(core)].shape)
    for a in range(n):
        up = list(core)
        dn = list(core)
        up[a] = slice(2, J + 1)
        dn[a] = slice(0, J - 1)
        lap += D[tuple(up)] - 2.0 * D[tuple(core)] + D[tuple(dn)]
    lap /= delta * delta
    qsum = np.zeros(D[tuple(core)].shape)
    for a in range(n):
        shape = [1] * n
        shape[a] = -1
        qsum = qsum + qv[1:J].reshape(shape)
    Dc = D[tuple(core)]
    resid = 0.5 * basis.sigma2 * lap - qsum * Dc + ensemble.D_n * Dc
    return float(np.linalg.norm(resid) / np.linalg.norm(Dc))
