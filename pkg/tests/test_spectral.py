"""Eigenproblem oracles: shooting method, Airy zeros, explicit sine series,
Richardson extrapolation, and a killed-Brownian Monte Carlo representation."""

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.optimize import brentq
from scipy.special import ai_zeros, airy

from dysonfs.errors import ValidationError
from dysonfs.spectral import (
    SpectralConfig,
    heat_kernel,
    heat_kernel_at,
    solve_eigen,
    truncation_error_bound,
)

# Frozen oracle values for q(r) = r, sigma2 = 1: e_k = |a_k| * 2**(-1/3)
# with a_k the Airy zeros (independently recomputed in tests below).
AIRY_E1 = 1.8557570814892383
AIRY_E2 = 3.2446076240031588

# Frozen oracle value: sum_k exp(-k^2/2) (2/pi) sin^2(k pi/2), 20 terms.
SINE_SERIES_H1 = 0.3932039898432947


def _shoot_endpoint(e, q, sigma2, r_wall):
    def rhs(r, y):
        return [y[1], (2.0 / sigma2) * (q(r) - e) * y[0]]

    sol = solve_ivp(rhs, (0.0, r_wall), [0.0, 1.0], method="DOP853",
                    rtol=1e-11, atol=1e-14)
    return float(sol.y[0, -1])


def _shooting_eigenvalues(q, sigma2, r_wall, count, e_hi=8.0, step=0.2):
    """Dirichlet eigenvalues by scanning the shot endpoint for sign changes."""
    roots = []
    e_prev, f_prev = 0.05, _shoot_endpoint(0.05, q, sigma2, r_wall)
    e = e_prev + step
    while e < e_hi and len(roots) < count:
        f = _shoot_endpoint(e, q, sigma2, r_wall)
        if f_prev * f < 0:
            roots.append(brentq(lambda x: _shoot_endpoint(x, q, sigma2, r_wall),
                                e_prev, e, xtol=1e-12, rtol=1e-14))
        e_prev, f_prev = e, f
        e += step
    return roots


def test_airy_ground_state_frozen_values():
    cfg = SpectralConfig(r_max=30.0, grid_points=6000, num_modes=8)
    basis = solve_eigen(lambda r: r, cfg)
    assert abs(basis.eigenvalues[0] - AIRY_E1) <= 2e-4
    assert abs(basis.eigenvalues[1] - AIRY_E2) <= 5e-4
    # the frozen literals themselves trace to the Airy zeros
    a = ai_zeros(2)[0]
    assert abs(AIRY_E1 - abs(a[0]) * 2 ** (-1 / 3)) < 1e-12
    assert abs(AIRY_E2 - abs(a[1]) * 2 ** (-1 / 3)) < 1e-12


def test_shooting_oracle_agrees_with_airy_zeros():
    # independent ODE route: zero of the shot endpoint at a far wall
    roots = _shooting_eigenvalues(lambda r: r, 1.0, 14.0, 2, e_hi=4.0)
    assert len(roots) == 2
    assert abs(roots[0] - AIRY_E1) <= 1e-7
    assert abs(roots[1] - AIRY_E2) <= 1e-7


def test_richardson_extrapolation_matches_shooting():
    e_m = {}
    for m in (3000, 6000):
        cfg = SpectralConfig(r_max=30.0, grid_points=m, num_modes=2)
        e_m[m] = solve_eigen(lambda r: r, cfg).eigenvalues[0]
    extrapolated = (4.0 * e_m[6000] - e_m[3000]) / 3.0
    shot = _shooting_eigenvalues(lambda r: r, 1.0, 14.0, 1, e_hi=2.4)[0]
    assert abs(extrapolated - shot) <= 1e-6
    # plain second-order convergence: the m=3000 error is ~4x the m=6000 one
    assert abs(e_m[3000] - shot) > 2.5 * abs(e_m[6000] - shot)


@pytest.mark.parametrize("sigma2", [1.0, 2.0])
def test_box_eigenvalues_quadratic_ladder(sigma2):
    cfg = SpectralConfig(r_max=np.pi, grid_points=4000, num_modes=8, sigma2=sigma2)
    basis = solve_eigen(lambda r: np.zeros_like(r), cfg)
    ks = np.arange(1, 9)
    np.testing.assert_allclose(basis.eigenvalues, sigma2 * ks ** 2 / 2.0,
                               rtol=1e-5)


def test_sigma2_scaling_of_airy_levels():
    # -(sigma2/2) phi'' + r phi has levels sigma^(2/3) 2^(-1/3) |a_k|
    cfg = SpectralConfig(r_max=30.0, grid_points=4000, num_modes=2, sigma2=2.0)
    basis = solve_eigen(lambda r: r, cfg)
    assert abs(basis.eigenvalues[0] - 2.3381074104597666) <= 5e-4


def test_heat_kernel_sine_series_spot_value():
    # oracle: direct 20-term summation of the explicit sine series
    series = sum(np.exp(-k * k / 2.0) * (2.0 / np.pi) * np.sin(k * np.pi / 2) ** 2
                 for k in range(1, 21))
    assert abs(series - SINE_SERIES_H1) < 1e-12
    cfg = SpectralConfig(r_max=np.pi, grid_points=4000, num_modes=40)
    basis = solve_eigen(lambda r: np.zeros_like(r), cfg)
    val = heat_kernel_at(basis, 1.0, np.pi / 2, np.pi / 2)[0, 0]
    assert abs(val - SINE_SERIES_H1) <= 1e-5


def test_orthonormality_signs_and_ordering():
    cfg = SpectralConfig(r_max=30.0, grid_points=2000, num_modes=8)
    basis = solve_eigen(lambda r: r, cfg)
    gram = (basis.eigenfunctions * basis.weights) @ basis.eigenfunctions.T
    assert np.max(np.abs(gram - np.eye(8))) <= 1e-8
    assert np.all(np.diff(basis.eigenvalues) > 0)
    assert np.all(basis.eigenvalues > 0)
    # every mode rises from the origin; the ground state has no interior
    # zero (positivity asserted above roundoff, since the true function
    # underflows double precision deep in the forbidden region)
    assert np.all(basis.eigenfunctions[:, 0] > 0)
    phi1 = basis.eigenfunctions[0]
    scale = np.max(np.abs(phi1))
    assert np.min(phi1) > -1e-12 * scale
    assert np.all(phi1[np.abs(phi1) > 1e-12 * scale] > 0)


def test_airy_ground_state_profile():
    cfg = SpectralConfig(r_max=30.0, grid_points=6000, num_modes=1)
    basis = solve_eigen(lambda r: r, cfg)
    a1 = ai_zeros(1)[0][0]
    exact = airy(2 ** (1 / 3) * basis.grid + a1)[0]
    exact /= np.sqrt(np.sum(exact ** 2) * basis.dr)
    assert np.max(np.abs(basis.eigenfunctions[0] - exact)) <= 5e-4


def test_heat_kernel_symmetric_and_positive():
    cfg = SpectralConfig(r_max=30.0, grid_points=1500, num_modes=8)
    basis = solve_eigen(lambda r: r, cfg)
    idx = np.arange(0, 1500, 5)
    H = heat_kernel(basis, 0.7, idx=idx)
    assert np.array_equal(H, H.T)
    evals = np.linalg.eigvalsh(H)
    assert evals.min() >= -1e-10


@pytest.mark.filterwarnings("ignore:truncation margin thin")
def test_semigroup_composition():
    cfg = SpectralConfig(r_max=30.0, grid_points=1200, num_modes=12)
    basis = solve_eigen(lambda r: r, cfg)
    Ht = heat_kernel(basis, 0.4)
    Hs = heat_kernel(basis, 0.9)
    comp = Ht @ (basis.weights[:, None] * Hs)
    Hts = heat_kernel(basis, 1.3)
    assert np.max(np.abs(comp - Hts)) <= 1e-6


@pytest.mark.filterwarnings("ignore:truncation margin thin")
def test_truncation_error_bound():
    cfg = SpectralConfig(r_max=30.0, grid_points=3000, num_modes=8)
    basis = solve_eigen(lambda r: r, cfg)
    assert truncation_error_bound(basis, 1.0) < 1e-3
    assert truncation_error_bound(basis, 10.0) < 1e-30
    # a richer basis bounds the actual dropped tail at probe points
    rich = solve_eigen(lambda r: r,
                       SpectralConfig(r_max=30.0, grid_points=3000, num_modes=24))
    pts = np.linspace(0.3, 6.0, 25)
    coarse = heat_kernel_at(basis, 1.0, pts, pts)
    fine = heat_kernel_at(rich, 1.0, pts, pts)
    actual = np.max(np.abs(coarse - fine))
    assert actual <= truncation_error_bound(basis, 1.0)


def test_validation_and_warnings():
    with pytest.raises(ValidationError):
        SpectralConfig(r_max=30.0, grid_points=30, num_modes=8)
    with pytest.raises(ValidationError):
        SpectralConfig(r_max=-1.0, grid_points=100, num_modes=4)
    with pytest.raises(ValidationError):
        SpectralConfig(r_max=30.0, grid_points=100, num_modes=4, sigma2=0.0)
    cfg = SpectralConfig(r_max=30.0, grid_points=100, num_modes=4)
    with pytest.raises(ValidationError):
        solve_eigen(lambda r: -np.ones_like(r), cfg)
    basis = solve_eigen(lambda r: r, cfg)
    with pytest.raises(ValidationError):
        heat_kernel(basis, 0.0)
    with pytest.raises(ValidationError):
        basis.phi_at([31.0])
    with pytest.warns(UserWarning, match="truncation"):
        solve_eigen(lambda r: r, SpectralConfig(r_max=8.0, grid_points=400,
                                                num_modes=8))


@pytest.mark.slow
@pytest.mark.filterwarnings("ignore:truncation margin thin")
def test_monte_carlo_killed_brownian_representation():
    # h_t(r, s) dr = E_r[exp(-int q(B)) ; B stays positive, B_t in bin],
    # estimated over >= 1e6 Brownian paths with bridge-corrected killing.
    t, r0, dt = 0.5, 1.0, 1e-3
    steps = int(round(t / dt))
    cfg = SpectralConfig(r_max=30.0, grid_points=6000, num_modes=40)
    basis = solve_eigen(lambda r: r, cfg)

    centers = np.array([0.5, 0.9, 1.3, 1.7, 2.1])
    half = 0.1
    s_dense = np.linspace(1e-4, 4.0, 4001)
    href = heat_kernel_at(basis, t, np.array([r0]), s_dense)[0]

    ref = np.empty(5)
    for i, c in enumerate(centers):
        mask = (s_dense >= c - half) & (s_dense <= c + half)
        ref[i] = np.trapezoid(href[mask], s_dense[mask])

    rng = np.random.default_rng(20240817)
    n_paths, batch = 1_000_000, 125_000
    sums = np.zeros(5)
    sums2 = np.zeros(5)
    for _ in range(n_paths // batch):
        x = np.full(batch, r0)
        logw = np.zeros(batch)
        alive = np.ones(batch, dtype=bool)
        for _ in range(steps):
            z = rng.standard_normal(batch)
            x_new = x + np.sqrt(dt) * z
            # exact Brownian-bridge crossing probability for the 0 wall
            cross = np.exp(-2.0 * np.clip(x, 0, None) * np.clip(x_new, 0, None) / dt)
            u = rng.random(batch)
            alive &= (x_new > 0) & (u > cross)
            logw -= 0.5 * dt * (x + x_new)  # trapezoid of q(r) = r
            x = x_new
        w = np.where(alive, np.exp(logw), 0.0)
        for i, c in enumerate(centers):
            wi = np.where(np.abs(x - c) <= half, w, 0.0)
            sums[i] += wi.sum()
            sums2[i] += (wi ** 2).sum()

    est = sums / n_paths
    var = sums2 / n_paths - est ** 2
    se = np.sqrt(var / n_paths)
    assert np.all(np.abs(est - ref) <= 3.0 * se)
