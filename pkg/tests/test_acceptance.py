"""End-to-end acceptance gate.

One test per acceptance criterion, each at its stated tolerance and time
budget, so `pytest tests/test_acceptance.py -v` prints one pass/fail
line per criterion.  Heavier scenes reuse the frozen seeds whose
expected behavior was measured against independent references (shooting
oracles, dynamic-programming bridge laws, quadrature densities).
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from dysonfs import determinantal as dt
from dysonfs import diffusion as df
from dysonfs import sampler as sp
from dysonfs import stats as st
from dysonfs import weyl
from dysonfs.cli import main as cli_main
from dysonfs.lattice import BUILTIN_STEP_LAWS, StepLaw, WalkModel, verify_km
from dysonfs.potentials import PowerLaw, solve_scale
from dysonfs.spectral import SpectralConfig, solve_eigen

pytestmark = pytest.mark.acceptance

THREADS = 4


@pytest.fixture(scope="module")
def airy_basis():
    cfg = SpectralConfig(r_max=30.0, grid_points=3000, num_modes=8)
    return solve_eigen(lambda r: r, cfg)


@pytest.fixture(scope="module")
def ens1(airy_basis):
    return dt.SlaterEnsemble(airy_basis, 1)


@pytest.fixture(scope="module")
def ens2(airy_basis):
    return dt.SlaterEnsemble(airy_basis, 2)


def sweep_models(n, lams=(0.01, 0.005, 0.002)):
    fam = PowerLaw(1.0)
    models = []
    for lam in lams:
        sc = solve_scale(fam, lam)
        models.append(WalkModel(StepLaw.spread(), n,
                                int(math.ceil(8.0 * sc.H)),
                                potential_family=fam, lam=lam))
    return models


def test_airy_levels_within_stated_tolerances():
    """Ground and first excited levels, orthonormal modes, under 10s."""
    t0 = time.monotonic()
    cfg = SpectralConfig(r_max=30.0, grid_points=3000, num_modes=8)
    basis = solve_eigen(lambda r: r, cfg)
    assert abs(basis.eigenvalues[0] - 1.855757) < 2e-4
    assert abs(basis.eigenvalues[1] - 3.244607) < 5e-4
    phi = basis.phi_at(basis.grid)
    gram = (phi * basis.dr) @ phi.T
    assert np.max(np.abs(gram - np.eye(phi.shape[0]))) < 1e-8
    elapsed = time.monotonic() - t0
    assert elapsed < 10.0
    print(f"PASS spectral oracle: e1 err {abs(basis.eigenvalues[0] - 1.855757):.2e}, "
          f"e2 err {abs(basis.eigenvalues[1] - 3.244607):.2e}, {elapsed:.1f}s")


def test_eigenrelation_residual_bounds_and_refinement(ens1, ens2):
    """Generator sum annihilates the Slater state; error is second order."""
    t0 = time.monotonic()
    r1 = dt.eigenrelation_residual(ens1)
    r2 = dt.eigenrelation_residual(ens2)
    assert r1 < 1e-3
    assert r2 < 5e-3
    cfg = SpectralConfig(r_max=30.0, grid_points=4095, num_modes=8)
    basis = solve_eigen(lambda r: r, cfg)
    for n in (1, 2):
        ens = dt.SlaterEnsemble(basis, n)
        coarse = dt.eigenrelation_residual(ens, sub_points=511)
        fine = dt.eigenrelation_residual(ens, sub_points=1023)
        assert 3.2 < coarse / fine < 4.8
    elapsed = time.monotonic() - t0
    assert elapsed < 30.0
    print(f"PASS eigenrelation: n=1 {r1:.2e}, n=2 {r2:.2e}, "
          f"refinement ratio in (3.2, 4.8), {elapsed:.1f}s")


def test_vandermonde_ratio_limit_ten_probes(ens2):
    """exp(D_2 t) kappa_t / (Delta(r) Delta(s)) near 1 at t=5, improving in t."""
    t0 = time.monotonic()
    rng = np.random.default_rng(0)
    checked = 0
    worst = 0.0
    while checked < 10:
        r = np.sort(rng.uniform(0.7, 3.1, 2))
        s = np.sort(rng.uniform(0.7, 3.1, 2))
        if r[1] - r[0] < 0.5 or s[1] - s[0] < 0.5:
            continue
        dd = ens2.slater_raw(r) * ens2.slater_raw(s)
        ratio = math.exp(ens2.D_n * 5.0) * dt.km_kernel(ens2, 5.0, r, s) / dd
        worst = max(worst, abs(ratio - 1.0))
        checked += 1
    assert worst < 0.01
    rr = (1.0, 2.0)
    d2 = ens2.slater_raw(rr) ** 2
    errs = [abs(math.exp(ens2.D_n * t) * dt.km_kernel(ens2, t, rr, rr) / d2 - 1.0)
            for t in (2.0, 4.0, 6.0, 8.0)]
    assert all(a > b for a, b in zip(errs, errs[1:]))
    elapsed = time.monotonic() - t0
    assert elapsed < 60.0
    print(f"PASS vandermonde limit: worst probe err {worst:.2e}, "
          f"decreasing over t=2,4,6,8, {elapsed:.1f}s")


def test_doob_kernel_mass_balance_determinant(ens2):
    """Row mass 1, exact reversibility weights, 2x2 kernel determinant."""
    t0 = time.monotonic()
    mass = dt.doob_row_mass(ens2, 1.0, (1.0, 2.0), cells=1200)
    assert abs(mass - 1.0) < 1e-4
    for r, s, t in (((1.2, 2.4), (0.9, 2.1), 1.3),
                    ((0.8, 1.8), (1.1, 2.6), 0.7),
                    ((1.0, 2.0), (1.4, 2.9), 2.0)):
        lhs = ens2.slater_raw(r) ** 2 * dt.doob_kernel(ens2, t, r, s)
        rhs = ens2.slater_raw(s) ** 2 * dt.doob_kernel(ens2, t, s, r)
        assert abs(lhs - rhs) <= 1e-12 * abs(lhs)
    rng = np.random.default_rng(7)
    for _ in range(5):
        pts = np.sort(rng.uniform(0.3, 4.0, size=2))
        K = dt.fermi_kernel(ens2, pts, pts)
        det_k = K[0, 0] * K[1, 1] - K[0, 1] * K[1, 0]
        assert det_k == pytest.approx(ens2.slater_raw(pts) ** 2, rel=1e-10)
    elapsed = time.monotonic() - t0
    assert elapsed < 60.0
    print(f"PASS kernel checks: row mass err {abs(mass - 1.0):.2e}, "
          f"balance and determinant exact, {elapsed:.1f}s")


def test_km_identity_fifty_randomized_instances():
    """Determinant equals the signed path enumeration on tiny instances."""
    t0 = time.monotonic()
    rng = np.random.default_rng(23)
    fam = PowerLaw(1.0)
    laws = {"rademacher": (StepLaw.rademacher(), {2: 8, 3: 5}),
            "lazy": (StepLaw.lazy(), {2: 6, 3: 4}),
            "spread": (StepLaw.spread(), {2: 4, 3: 3})}
    names = sorted(laws)
    made = nonzero = 0
    while made < 50:
        law, caps = laws[names[int(rng.integers(0, 3))]]
        n = int(rng.integers(2, 4))
        N = min(5, int(rng.integers(2, caps[n] + 1)))
        x_max = int(rng.integers(6, 10))
        lam = float(rng.choice([0.0, 0.1]))
        if lam > 0:
            m = WalkModel(law, n, x_max, potential_family=fam, lam=lam,
                          check_box=False)
        else:
            m = WalkModel(law, n, x_max)
        sites = np.arange(m.site_min, x_max + 1)
        u = np.sort(rng.choice(sites, n, replace=False))
        v = np.sort(rng.choice(sites, n, replace=False))
        rep = verify_km(m, tuple(int(x) for x in u), tuple(int(x) for x in v), N)
        assert rep.abs_diff <= 1e-12 * max(1.0, abs(rep.det))
        nonzero += int(abs(rep.det) > 0)
        made += 1
    assert nonzero >= 25
    elapsed = time.monotonic() - t0
    assert elapsed < 120.0
    print(f"PASS km identity: 50 instances, {nonzero} nonzero, {elapsed:.1f}s")


def test_exact_sampler_matches_dp_at_1e5():
    """One- and two-time sampled marginals against the bridge DP laws."""
    t0 = time.monotonic()
    m = WalkModel(StepLaw.lazy(), 1, 13, potential_family=PowerLaw(1.0),
                  lam=0.1)
    N, j1, j2 = 12, 4, 8
    ens = sp.sample_exact(m, (2,), (2,), N, 100_000, seed=13)
    S = m.sites.size
    marg = sp.bridge_marginal(m, (2,), (2,), N, j1)
    emp1 = np.bincount(ens.paths[:, j1, 0] - m.site_min, minlength=S)
    tv1 = st.binned_tv(emp1, marg)
    joint = sp.bridge_two_time(m, (2,), (2,), N, j1, j2)
    emp2 = np.zeros((S, S))
    np.add.at(emp2, (ens.paths[:, j1, 0] - m.site_min,
                     ens.paths[:, j2, 0] - m.site_min), 1.0)
    tv2 = st.binned_tv(emp2, joint.reshape(S, S))
    assert tv1 < 0.02
    assert tv2 < 0.02
    elapsed = time.monotonic() - t0
    assert elapsed < 300.0
    print(f"PASS sampler vs DP: one-time TV {tv1:.4f}, "
          f"two-time TV {tv2:.4f} at 1e5 samples, {elapsed:.1f}s")


def test_tilt_convergence_desk_scale(ens1, ens2):
    """Rescaled mid-window marginals approach the stationary law as the
    tilt softens; joint law within reach for two ordered walks."""
    t0 = time.monotonic()
    rows1 = st.tilt_convergence_experiment(
        sweep_models(1), 0.0, ens1, samples=20_000, seed=0, threads=THREADS)
    ks = [row.reports[0].value for row in rows1]
    for row in rows1:
        assert row.N == math.ceil(8.0 * row.H * row.H)
    assert all(a >= b for a, b in zip(ks, ks[1:]))
    assert ks[-1] < 0.05
    rows2 = st.tilt_convergence_experiment(
        sweep_models(2), 0.0, ens2, samples=20_000, seed=0, threads=THREADS)
    joint = [row.reports[1].value for row in rows2]
    assert joint[-1] < 0.1
    elapsed = time.monotonic() - t0
    assert elapsed < 1800.0
    print(f"PASS tilt convergence: KS {['%.4f' % v for v in ks]}, "
          f"n=2 joint TV {joint[-1]:.4f}, {elapsed:.1f}s")


def test_diffusion_stationarity_and_dt_robustness(ens1, ens2):
    """Long runs reproduce the stationary marginals; halving dt moves the
    statistic by less than the sampling noise."""
    t0 = time.monotonic()
    tr1 = df.simulate(df.DiffusionConfig(ensemble=ens1, t_final=2000.0,
                                         initial=(1.0,), seed=5))
    rep1 = df.stationarity_report(tr1, ens1)
    assert rep1.top_tv < 0.05
    tr1h = df.simulate(df.DiffusionConfig(ensemble=ens1, t_final=2000.0,
                                          initial=(1.0,), seed=5, dt=2.5e-4))
    rep1h = df.stationarity_report(tr1h, ens1)
    assert abs(rep1.top_tv - rep1h.top_tv) < rep1.noise_floor
    tr2 = df.simulate(df.DiffusionConfig(ensemble=ens2, t_final=2000.0,
                                         initial=(1.0, 2.0), seed=7,
                                         boundary_guard=0.02))
    rep2 = df.stationarity_report(tr2, ens2)
    assert rep2.marginal_tv[-1] < 0.08
    elapsed = time.monotonic() - t0
    assert elapsed < 600.0
    print(f"PASS diffusion stationarity: n=1 TV {rep1.top_tv:.4f}, dt-halving "
          f"shift {abs(rep1.top_tv - rep1h.top_tv):.4f} < floor "
          f"{rep1.noise_floor:.4f}, n=2 top TV {rep2.marginal_tv[-1]:.4f}, "
          f"{elapsed:.0f}s")


def test_mixing_decay_exact_dp():
    """Window law forgets the boundary data geometrically in the buffer."""
    t0 = time.monotonic()
    fam = PowerLaw(1.0)
    model = WalkModel(StepLaw.spread(), 1, 18, potential_family=fam, lam=0.1)
    rep = st.mixing_experiment(model, 1.0, [1, 2, 3, 4],
                               (((1,), (1,)), ((4,), (4,))),
                               threads=THREADS)
    assert rep.method == "exact"
    assert not rep.inconclusive
    assert rep.slope < 0.0
    tvs = [row.tv for row in rep.rows]
    assert tvs[3] < 0.5 * tvs[0]
    elapsed = time.monotonic() - t0
    assert elapsed < 600.0
    print(f"PASS mixing decay: slope {rep.slope:.4f}, TV(K=4)/TV(K=1) "
          f"{tvs[3] / tvs[0]:.4f}, {elapsed:.1f}s")


def test_chamber_checks():
    """Harmonic polynomials on the grid, conditioned exit laws vs their
    quadrature references."""
    t0 = time.monotonic()
    for kind, n, point in (("C", 2, (1.0, 2.0)),
                           ("C", 3, (0.71412292, 1.09202627, 2.50318616)),
                           ("D", 3, (0.71412292, 1.09202627, 2.50318616))):
        ch = weyl.ChamberKind(kind, n)
        val = weyl.harmonic(ch, point)
        assert weyl.harmonicity_residual(ch, point, 1e-3) < 1e-5 * abs(val)
    a3 = weyl.ChamberKind("A", 3)
    assert weyl.harmonicity_residual(a3, (0.25, 1.5, 3.0), 2.0 ** -10) == 0.0

    rep1 = weyl.meander_exit_check(weyl.ChamberKind("C", 1), (0.04,),
                                   100_000, 200, seed=31)
    assert rep1.value < 0.05
    rep2 = weyl.meander_exit_check(weyl.ChamberKind("C", 2), (0.01, 0.02),
                                   4000, 150, seed=12, bins=8)
    assert rep2.value < 0.1
    elapsed = time.monotonic() - t0
    assert elapsed < 600.0
    print(f"PASS chamber checks: harmonicity within bounds, n=1 exit TV "
          f"{rep1.value:.4f}, n=2 exit TV {rep2.value:.4f}, {elapsed:.0f}s")


def test_seeded_pipelines_byte_identical(tmp_path):
    """Every pipeline, run twice from one config, emits identical bytes."""
    t0 = time.monotonic()
    small = ["--set", "spectral.grid_points=1200",
             "--set", "spectral.num_modes=6"]
    scenes = [
        ["spectrum"] + small,
        ["kernel"] + small + ["--set", "kernel.heatmap_points=24"],
        ["verify-km"],
        ["sample-walks"] + small + ["--set", "walks.samples=50"],
        ["sample-diffusion"] + small + ["--set", "diffusion.t_final=0.2"],
        ["tilt-convergence"] + small + [
            "--set", "tilt_convergence.lambdas=[0.05]",
            "--set", "tilt_convergence.samples=500"],
        ["mixing"] + small + ["--set", "potential.lambda=0.1"],
        ["weyl-check", "--chamber", "C", "--n", "1",
         "--set", "weyl.walkers=2000", "--set", "weyl.steps=50"],
    ]
    for idx, scene in enumerate(scenes):
        dirs = []
        for tag in ("a", "b"):
            root = tmp_path / f"{idx}{tag}"
            assert cli_main(scene + ["--out-dir", str(root)]) == 0
            runs = list(root.iterdir())
            assert len(runs) == 1
            dirs.append(runs[0])
        assert dirs[0].name == dirs[1].name
        files = sorted(p.name for p in dirs[0].iterdir())
        assert files == sorted(p.name for p in dirs[1].iterdir())
        for name in files:
            assert (dirs[0] / name).read_bytes() == \
                (dirs[1] / name).read_bytes(), f"{scene[0]}: {name} differs"
    elapsed = time.monotonic() - t0
    assert elapsed < 600.0
    print(f"PASS determinism: {len(scenes)} pipelines byte-identical on "
          f"rerun, {elapsed:.1f}s")
