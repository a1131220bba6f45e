"""Euler-Maruyama integrator checks: drift field, stationarity, safety rails."""

import numpy as np
import pytest

from dysonfs import diffusion as df
from dysonfs.determinantal import SlaterEnsemble
from dysonfs.errors import NearBoundaryError, ResourceError, ValidationError
from dysonfs.spectral import SpectralConfig, solve_eigen


def tv(a, b):
    return 0.5 * float(np.abs(np.asarray(a) - np.asarray(b)).sum())


@pytest.fixture(scope="module")
def airy_basis():
    cfg = SpectralConfig(r_max=30.0, grid_points=3000, num_modes=8)
    return solve_eigen(lambda r: r, cfg)


@pytest.fixture(scope="module")
def ens1(airy_basis):
    return SlaterEnsemble(airy_basis, 1)


@pytest.fixture(scope="module")
def ens2(airy_basis):
    return SlaterEnsemble(airy_basis, 2)


@pytest.fixture(scope="module")
def run1(ens1):
    cfg = df.DiffusionConfig(ensemble=ens1, t_final=2000.0, initial=(1.0,),
                             seed=5)
    tr = df.simulate(cfg)
    return tr, df.stationarity_report(tr, ens1)


@pytest.fixture(scope="module")
def run1_half_dt(ens1):
    cfg = df.DiffusionConfig(ensemble=ens1, t_final=2000.0, initial=(1.0,),
                             seed=5, dt=2.5e-4)
    tr = df.simulate(cfg)
    return tr, df.stationarity_report(tr, ens1)


@pytest.fixture(scope="module")
def run2(ens2):
    # guard sized so dt * (drift at the guard) stays within the 0.1
    # step budget; the 1e-8 default admits near-wall drifts that jump
    # past the neighbour and lock the ordering rejection
    cfg = df.DiffusionConfig(ensemble=ens2, t_final=2000.0,
                             initial=(1.0, 2.0), seed=7, boundary_guard=0.02)
    tr = df.simulate(cfg)
    return tr, df.stationarity_report(tr, ens2)


def test_config_validation(ens1, ens2):
    good = dict(ensemble=ens1, t_final=1.0, initial=(1.0,), seed=0)
    df.DiffusionConfig(**good)
    with pytest.raises(ValidationError):
        df.DiffusionConfig(**{**good, "dt": 2e-3})
    with pytest.raises(ValidationError):
        df.DiffusionConfig(**{**good, "dt": 0.0})
    with pytest.raises(ValidationError):
        df.DiffusionConfig(**{**good, "t_final": 0.0})
    with pytest.raises(ValidationError):
        df.DiffusionConfig(**{**good, "boundary_guard": 0.0})
    with pytest.raises(ValidationError):
        df.DiffusionConfig(**{**good, "boundary_guard": 1.0})
    with pytest.raises(ValidationError):
        df.DiffusionConfig(**{**good, "initial": (1.0, 2.0)})
    with pytest.raises(ValidationError):
        df.DiffusionConfig(**{**good, "initial": (0.0,)})
    with pytest.raises(ValidationError):
        df.DiffusionConfig(ensemble=ens2, t_final=1.0, initial=(2.0, 1.0),
                           seed=0)
    with pytest.raises(ValidationError):
        df.DiffusionConfig(ensemble=ens1, t_final=1.0, initial=(31.0,),
                           seed=0)


@pytest.mark.parametrize("n", [1, 2])
def test_drift_matches_log_density_gradient(airy_basis, n):
    """Central differences of log |Delta| at 40 interior probe points."""
    ens = SlaterEnsemble(airy_basis, n)
    rng = np.random.default_rng(2)
    checked = 0
    while checked < 40:
        pt = np.sort(rng.uniform(0.2, 4.0, size=n))
        if n > 1 and np.min(np.diff(pt)) < 0.15:
            continue
        checked += 1
        dr = df.drift(ens, pt)
        h = 1e-5
        for i in range(n):
            up = pt.copy()
            up[i] += h
            dn = pt.copy()
            dn[i] -= h
            fd = (np.log(abs(ens.slater_raw(up)))
                  - np.log(abs(ens.slater_raw(dn)))) / (2 * h)
            assert abs(fd - dr[i]) / max(abs(fd), 1e-12) < 1e-6


def test_drift_point_validation(ens2):
    with pytest.raises(ValidationError):
        df.drift(ens2, (1.0,))
    with pytest.raises(ValidationError):
        df.drift(ens2, (2.0, 1.0))
    with pytest.raises(ValidationError):
        df.drift(ens2, (-1.0, 1.0))


def test_near_boundary_guard(ens1, ens2):
    with pytest.raises(NearBoundaryError):
        df.drift(ens1, (1e-9,))
    with pytest.raises(NearBoundaryError):
        df.drift(ens2, (1e-9, 1.0))
    # a generous guard rejects even comfortably interior points
    with pytest.raises(NearBoundaryError):
        df.drift(ens2, (2.0, 2.001), boundary_guard=0.5)
    cfg = df.DiffusionConfig(ensemble=ens2, t_final=1.0,
                             initial=(1e-9, 1.0), seed=0)
    with pytest.raises(NearBoundaryError):
        df.simulate(cfg)


@pytest.mark.parametrize("n", [1, 2])
def test_drift_laplacian_identity(airy_basis, n):
    """(1/2) sum Delta''_i / Delta equals sum q(r_i) minus the level sum.

    Ties the drift interpolants back to the eigenproblem they came from.
    """
    ens = SlaterEnsemble(airy_basis, n)
    assert df.drift_identity_residual(ens) < 1e-3


def test_zero_noise_flow_reaches_density_mode(ens1, ens2):
    cfg = df.DiffusionConfig(ensemble=ens1, t_final=50.0, initial=(1.0,),
                             seed=0)
    end = df.simulate(cfg, noise_scale=0.0).states[-1]
    g = np.linspace(0.01, 6.0, 4000)
    mode = g[np.argmax(ens1.slater_on_grid(g) ** 2)]
    assert abs(end[0] - mode) < 0.005

    cfg2 = df.DiffusionConfig(ensemble=ens2, t_final=50.0,
                              initial=(1.0, 2.0), seed=0,
                              boundary_guard=0.02)
    end2 = df.simulate(cfg2, noise_scale=0.0).states[-1]
    centers, _ = ens2.chamber_grid(300)
    d2 = ens2.slater_on_grid(centers) ** 2
    ij = np.unravel_index(np.argmax(d2), d2.shape)
    # grid argmax is only cell-accurate; allow a bit under two cells
    assert abs(end2[0] - centers[ij[0]]) < 0.08
    assert abs(end2[1] - centers[ij[1]]) < 0.08


def test_reference_marginals_subcell_invariance(ens1, ens2):
    for ens in (ens1, ens2):
        r6 = df.reference_marginals(ens, 40, 4.0, subcells=6)
        r12 = df.reference_marginals(ens, 40, 4.0, subcells=12)
        assert r6.shape == (ens.n, 41)
        assert np.allclose(r6.sum(axis=1), 1.0, atol=1e-12)
        assert tv(r6[-1], r12[-1]) < 1e-3


def test_stationary_marginal_n1(run1):
    tr, rep = run1
    assert rep.accepted == 4_000_000
    assert rep.top_tv < 0.05
    assert rep.noise_floor < 0.05


def test_dt_halving_within_noise_floor(run1, run1_half_dt):
    _, rep = run1
    _, rep_h = run1_half_dt
    assert abs(rep.top_tv - rep_h.top_tv) < rep.noise_floor


def test_stationary_marginals_n2(run2):
    tr, rep = run2
    assert max(rep.marginal_tv) < 0.08
    assert rep.max_drift_step <= 0.1
    assert rep.rejected < 5000


def test_stationary_start_stays_stationary(ens2):
    x0 = df.sample_stationary(ens2, seed=21)
    cfg = df.DiffusionConfig(ensemble=ens2, t_final=2000.0, initial=x0,
                             seed=9, boundary_guard=0.02)
    rep = df.stationarity_report(df.simulate(cfg), ens2)
    assert max(rep.marginal_tv) < 0.05


def test_ordering_preserved_along_path(run2):
    tr, _ = run2
    s = tr.states
    assert np.all(s[:, 0] > 0)
    assert np.all(s[:, 1] > s[:, 0])
    assert np.all(s[:, 1] < 30.0)


def test_trajectory_times(ens1):
    cfg = df.DiffusionConfig(ensemble=ens1, t_final=0.5, initial=(1.0,),
                             seed=3)
    tr = df.simulate(cfg)
    assert tr.states.shape == (1001, 1)
    assert tr.times[0] == 0.0
    assert tr.times[-1] == pytest.approx(0.5)


def test_wall_overshoot_triggers_stuck_error(ens2):
    """Tiny guard + near-wall start: drift jumps past the neighbour and
    the ordering rejection can never clear."""
    cfg = df.DiffusionConfig(ensemble=ens2, t_final=10.0,
                             initial=(1e-4, 1.0), seed=1)
    with pytest.raises(ResourceError):
        df.simulate(cfg)


def test_lag_one_transition_counts_symmetric(run1):
    """Stationary reversible dynamics: C[i,j] and C[j,i] agree to
    within counting noise (z below 5 on well-populated pairs)."""
    tr, _ = run1
    b = np.minimum((tr.states[:, 0] / 4.0 * 20).astype(int), 20)
    C = np.zeros((21, 21))
    np.add.at(C, (b[:-1], b[1:]), 1.0)
    diff = C - C.T
    tot = C + C.T
    mask = tot >= 100
    z = np.abs(diff[mask]) / np.sqrt(tot[mask])
    assert z.max() < 5.0


def test_report_needs_enough_samples(ens1):
    cfg = df.DiffusionConfig(ensemble=ens1, t_final=0.5, initial=(1.0,),
                             seed=3)
    tr = df.simulate(cfg)
    with pytest.raises(ResourceError):
        df.stationarity_report(tr, ens1)


def test_bitwise_reproducibility(ens2):
    def go(seed):
        cfg = df.DiffusionConfig(ensemble=ens2, t_final=0.5,
                                 initial=(1.0, 2.0), seed=seed,
                                 boundary_guard=0.02)
        return df.simulate(cfg).states

    a, b, c = go(5), go(5), go(6)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_three_walk_smoke(airy_basis):
    ens3 = SlaterEnsemble(airy_basis, 3)
    cfg = df.DiffusionConfig(ensemble=ens3, t_final=1.0,
                             initial=(0.8, 1.6, 2.4), seed=11,
                             boundary_guard=0.02)
    tr = df.simulate(cfg)
    s = tr.states
    assert s.shape == (2001, 3)
    assert np.all(np.isfinite(s))
    assert np.all(s[:, 0] > 0)
    assert np.all(np.diff(s, axis=1) > 0)
