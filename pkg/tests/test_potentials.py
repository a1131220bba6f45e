"""Scale equation, rescaled profiles, and integrability diagnostics."""

import numpy as np
import pytest

from dysonfs.errors import ValidationError
from dysonfs.potentials import (
    DEFAULT_LAMBDA0,
    PowerLaw,
    Tabulated,
    check_integrability,
    rescaled_potential,
    solve_scale,
)

# Frozen closed-form scales: H = lam**(-1/(2+alpha)).
SCALE_CASES = [
    (1.0, 1e-3, 10.0),
    (2.0, 1.0, 1.0),
    (1.0, 8e-3, 5.0),
]


@pytest.mark.parametrize("alpha,lam,expected", SCALE_CASES)
def test_solve_scale_frozen_values(alpha, lam, expected):
    scale = solve_scale(PowerLaw(alpha), lam)
    assert abs(scale.H - expected) <= 1e-12 * expected
    assert abs(scale.h * scale.H - 1.0) <= 1e-12


def test_scale_matches_closed_form_across_lambda():
    rng = np.random.default_rng(7)
    for alpha in (0.5, 1.0, 2.0, 3.0):
        family = PowerLaw(alpha)
        for lam in np.geomspace(1e-6, 1.0, 25):
            H = solve_scale(family, lam).H
            exact = lam ** (-1.0 / (2.0 + alpha))
            assert abs(H - exact) <= 1e-10 * exact
    # random spot checks off the grid
    for _ in range(20):
        alpha = rng.uniform(0.3, 4.0)
        lam = 10.0 ** rng.uniform(-6, 0)
        H = solve_scale(PowerLaw(alpha), lam).H
        assert abs(H - lam ** (-1.0 / (2.0 + alpha))) <= 1e-10 * H


def test_scale_monotone_decreasing_in_lambda():
    family = PowerLaw(1.0)
    lams = np.geomspace(1e-6, 1.0, 30)
    Hs = [solve_scale(family, lam).H for lam in lams]
    assert all(a > b for a, b in zip(Hs, Hs[1:]))


def test_rescaled_potential_is_exact_power_profile():
    family = PowerLaw(1.5)
    r = np.linspace(0.0, 5.0, 64)
    for lam in (1e-5, 1e-3, DEFAULT_LAMBDA0):
        scale = solve_scale(family, lam)
        np.testing.assert_allclose(rescaled_potential(family, scale, r),
                                   r ** 1.5, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(scale.q_profile(r), scale.q0_profile(r),
                                   rtol=1e-12, atol=1e-12)


def test_rescaled_dominates_limit_profile_for_small_lambda():
    # Domination q >= q0 is exact for power tables; for a table whose
    # log-log slope increases toward its tail value it holds below the
    # scale (r <= 1), and the profiles converge as lam drops.
    x = np.geomspace(0.01, 100.0, 15)
    power_table = Tabulated(x, x ** 1.5)
    r = np.linspace(0.05, 3.0, 40)
    for lam in (1e-4, 1e-2, DEFAULT_LAMBDA0):
        scale = solve_scale(power_table, lam)
        assert np.all(scale.q_profile(r) >= scale.q0_profile(r) - 1e-9)

    xc = np.geomspace(0.05, 50.0, 14)
    convex = Tabulated(xc, xc + xc ** 2)
    r_lo = np.linspace(0.05, 1.0, 24)
    errs = []
    for lam in (1e-2, 1e-4, 1e-6):
        scale = solve_scale(convex, lam)
        assert np.all(scale.q_profile(r_lo) >= scale.q0_profile(r_lo) - 1e-9)
        ratio = scale.q_profile(r) / scale.q0_profile(r)
        errs.append(np.max(np.abs(ratio - 1.0)))
    assert errs[0] > errs[1] > errs[2]


def test_tabulated_reproduces_power_law_exactly():
    x = np.geomspace(0.01, 100.0, 15)
    family = Tabulated(x, x ** 1.5)
    probe = np.concatenate([np.geomspace(0.02, 80.0, 37), [0.001, 500.0, 0.0]])
    np.testing.assert_allclose(family.value(2.0, probe), 2.0 * probe ** 1.5,
                               rtol=1e-10, atol=1e-12)
    assert abs(family.tail_exponent() - 1.5) <= 1e-10
    scale = solve_scale(family, 1e-3)
    assert abs(scale.H - 1e-3 ** (-1.0 / 3.5)) <= 1e-10 * scale.H


def test_tabulated_general_table_solves_scale_equation():
    x = np.geomspace(0.1, 200.0, 20)
    family = Tabulated(x, x ** 2 / (1.0 + x))
    for lam in (1e-4, 3e-2):
        scale = solve_scale(family, lam)
        residual = scale.H ** 2 * float(family.value(lam, scale.H)) - 1.0
        assert abs(residual) <= 1e-10
    # tail of x^2/(1+x) is x^1, up to the secant slope of the last knots
    assert abs(family.tail_exponent() - 1.0) < 1e-2


INTEGRABILITY_CASES = [
    # (alpha, kappa, frozen value of int_0^inf exp(-kappa r^alpha) dr)
    (1.0, 1.0, 1.0),
    (2.0, 1.0, 0.8862269254527579),  # sqrt(pi)/2
    (1.0, 2.0, 0.5),
]


@pytest.mark.parametrize("alpha,kappa,expected", INTEGRABILITY_CASES)
def test_check_integrability_frozen_values(alpha, kappa, expected):
    scale = solve_scale(PowerLaw(alpha), 1e-3)
    report = check_integrability(scale, kappa)
    assert abs(report.value - expected) <= 1e-6
    assert report.tail_bound <= 1e-12
    assert not report.divergent


def test_check_integrability_flags_saturating_tail():
    # A saturating table extrapolates with a nearly flat slope, so the
    # integrand's tail decays slower than r^-2 and must be flagged.
    x = np.geomspace(0.1, 100.0, 25)
    family = Tabulated(x, 5.0 * x / (1.0 + x) + 1e-4 * np.log(x + 1.0))
    scale = solve_scale(family, 1e-2)
    assert check_integrability(scale, 1.0).divergent


def test_validation_errors():
    with pytest.raises(ValidationError):
        PowerLaw(0.0)
    with pytest.raises(ValidationError):
        PowerLaw(1.0).value(-1e-3, 1.0)
    with pytest.raises(ValidationError):
        solve_scale(PowerLaw(1.0), 0.0)
    with pytest.raises(ValidationError):
        PowerLaw(1.0).value(1e-3, [-1.0, 2.0])
    x = np.geomspace(0.1, 10.0, 8)
    with pytest.raises(ValidationError):
        Tabulated(x, -np.ones_like(x))
    with pytest.raises(ValidationError):
        Tabulated(x, x[::-1] ** 2)
    with pytest.raises(ValidationError):
        Tabulated(np.linspace(1.0, 10.0, 8), np.linspace(1.0, 10.0, 8) ** 2)
