"""Closed-form disk values, frozen before the solver was written."""
import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from gelfand import oracles
from gelfand.diagnostics import energy_zero
from gelfand.grid import DiskRadial, build_mesh

# alpha, lambda, mu, mass_eu, E, g, mean_z (30-digit evaluation, rounded)
FROZEN = [
    (0.25, 5.0265482457436692, 1.28, 3.9269908169872415, 0.023021316202233832, 0.75, 0.049735919716217292),
    (0.5, 8.377580409572782, 1.7777777777777778, 4.7123889803846899, 0.025830289146162706, 0.5, 0.059683103659460751),
    (1.0, 12.566370614359173, 2.0, 6.2831853071795865, 0.030740328530378129, 0.0, 0.079577471545947668),
    (3.0, 18.849555921538759, 1.5, 12.566370614359173, 0.045008619037213374, -2.0, 0.15915494309189534),
    (9.0, 22.619467105846511, 0.72, 31.415926535897932, 0.068897639091669157, -8.0, 0.39788735772973834),
]


@pytest.mark.parametrize("alpha, lam, mu, mass, E, g, mean_z", FROZEN)
def test_closed_form_matches_frozen_values(alpha, lam, mu, mass, E, g, mean_z):
    r = oracles.liouville_closed_form(alpha)
    assert r.lam == pytest.approx(lam, rel=1e-14)
    assert r.mu == pytest.approx(mu, rel=1e-14)
    assert r.mass_eu == pytest.approx(mass, rel=1e-14)
    assert r.E == pytest.approx(E, rel=1e-12)
    assert r.g == pytest.approx(g, abs=1e-13)
    assert r.mean_z == pytest.approx(mean_z, rel=1e-13)


def test_alpha_one_is_the_bending_point():
    r = oracles.liouville_closed_form(1.0)
    assert r.lam == pytest.approx(4 * math.pi)
    assert r.mu == pytest.approx(2.0)
    assert r.mass_eu == pytest.approx(2 * math.pi)
    assert r.E == pytest.approx((2 * math.log(2) - 1) / (4 * math.pi), rel=1e-13)
    assert abs(r.g) < 1e-14
    assert r.mean_z == pytest.approx(1 / (4 * math.pi))


def test_alpha_three():
    r = oracles.liouville_closed_form(3.0)
    assert (r.lam, r.mu, r.g) == pytest.approx((6 * math.pi, 1.5, -2.0))


@pytest.mark.parametrize("alpha", [1e-3, 1e-6, 1e-9])
def test_small_alpha_limit(alpha):
    r = oracles.liouville_closed_form(alpha)
    assert r.E == pytest.approx(1 / (16 * math.pi), rel=2 * alpha)
    assert r.g == pytest.approx(1.0, abs=2 * alpha)
    assert r.lam == pytest.approx(0.0, abs=30 * alpha)


def test_energy_factor_is_continuous_across_series_switch():
    d = np.array([-0.0101, -0.0099, 0.0099, 0.0101])
    lam = 8 * np.pi * d / (1 + d)
    E = oracles.disk_energy(lam)
    assert E[1] == pytest.approx(E[0], rel=1e-3)
    assert E[2] == pytest.approx(E[3], rel=1e-3)
    # series branch against the direct formula at a point where both are accurate
    d0 = 0.0099
    c = 1 + d0
    direct = c * (c * math.log(c) - c + 1) / (8 * math.pi * d0**2)
    assert oracles.disk_energy(8 * np.pi * d0 / c) == pytest.approx(direct, rel=1e-10)


@pytest.mark.parametrize("alpha", [0.0, -1.0, math.nan, math.inf])
def test_invalid_alpha(alpha):
    with pytest.raises(ValueError):
        oracles.liouville_closed_form(alpha)


def test_lambda_at_or_above_eight_pi_rejected():
    with pytest.raises(ValueError):
        oracles.disk_energy(8 * math.pi)


@pytest.mark.parametrize("alpha", [0.25, 0.5, 1.0, 3.0, 4.0, 9.0])
def test_quadrature_path_agrees_with_closed_form(alpha):
    r = oracles.liouville_closed_form(alpha)
    mass, E = oracles.liouville_quadrature(alpha)
    assert mass == pytest.approx(r.mass_eu, rel=1e-12)
    assert E == pytest.approx(r.E, rel=1e-11)


@given(st.floats(min_value=-50.0, max_value=25.0))
@settings(max_examples=60, deadline=None)
def test_consistency_chain(lam):
    # mu = lam / mass and g = mass * dmu/dlam as algebraic identities
    mu, mass, g = oracles.disk_mu(lam), oracles.disk_mass(lam), oracles.disk_g(lam)
    assert float(mu) == pytest.approx(lam / float(mass), rel=1e-12, abs=1e-15)
    dmu = (8 * math.pi - 2 * lam) / (8 * math.pi**2)
    assert float(g) == pytest.approx(float(mass) * dmu, rel=1e-12, abs=1e-14)


def test_symbolic_substitution_and_derivatives():
    r, a, L = sp.symbols("r alpha lambda", positive=True)
    u = 2 * sp.log((1 + a) / (1 + a * r**2))
    lap = sp.diff(r * sp.diff(u, r), r) / r
    mu = 8 * a / (1 + a) ** 2
    assert sp.simplify(-lap - mu * sp.exp(u)) == 0
    assert u.subs(r, 1) == 0
    # eliminate alpha: lambda = 8 pi alpha/(1+alpha)
    alpha_of = L / (8 * sp.pi - L)
    mu_l = sp.simplify(mu.subs(a, alpha_of))
    assert sp.simplify(mu_l - L * (8 * sp.pi - L) / (8 * sp.pi**2)) == 0
    mass_l = sp.pi * (1 + alpha_of)
    g_l = sp.simplify(mass_l * sp.diff(mu_l, L))
    assert sp.simplify(g_l - (8 * sp.pi - 2 * L) / (8 * sp.pi - L)) == 0


@pytest.mark.parametrize("lam", [-7.0, 3.0, 4 * math.pi, 20.0])
def test_mean_z_equals_two_E_plus_lambda_E_prime(lam):
    L = sp.Symbol("lambda")
    c = 1 + L / (8 * sp.pi - L)
    E = c * (c * sp.log(c) - c + 1) / (8 * sp.pi * (c - 1) ** 2)
    rhs = (2 * E + L * sp.diff(E, L)).subs(L, sp.Float(lam, 40)).evalf(30)
    assert float(rhs) == pytest.approx(float(oracles.disk_mean_z(lam)), rel=1e-10)


@pytest.mark.parametrize("alpha", [0.25, 1.0, 4.0])
def test_substitution_on_fine_radial_grid_is_second_order(alpha):
    mu = 8 * alpha / (1 + alpha) ** 2
    errs = []
    for n in (400, 800):
        h = 1.0 / n
        r = np.linspace(h, 1 - h, n - 1)
        u = 2 * np.log((1 + alpha) / (1 + alpha * r**2))
        up = 2 * np.log((1 + alpha) / (1 + alpha * (r + h) ** 2))
        um = 2 * np.log((1 + alpha) / (1 + alpha * (r - h) ** 2))
        lap = ((r + h / 2) * (up - u) - (r - h / 2) * (u - um)) / (r * h * h)
        errs.append(np.max(np.abs(-lap - mu * np.exp(u))[r > 0.05]))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_disk_e0():
    assert oracles.disk_e0() == pytest.approx(0.019894367886486917, rel=1e-15)
    assert oracles.disk_e0() == pytest.approx(oracles.liouville_closed_form(1e-12).E, abs=1e-12)


def test_disk_e0_against_fine_mesh():
    assert energy_zero(build_mesh(DiskRadial(0, 4096))) == pytest.approx(oracles.disk_e0(), abs=1e-6)


def test_bessel_eigenpair_table():
    table = oracles.appendix_eigenpairs(3, 2)
    first = table[0]
    assert (first.n, first.m, first.multiplicity) == (1, 1, 3)
    assert first.sigma == pytest.approx(14.681970642123893, rel=1e-12)
    assert first.zero == pytest.approx(3.83, abs=5e-3)
    e21 = next(e for e in table if (e.n, e.m) == (2, 1))
    assert e21.multiplicity == 2
    assert e21.sigma == pytest.approx(26.374616427163391, rel=1e-12)
    assert all(e.n >= 1 for e in table)
    assert [e.sigma for e in table] == sorted(e.sigma for e in table)
    assert "J0" in first.eigenfunctions and "J1" in first.eigenfunctions


def test_bessel_eigenpairs_reject_empty_table():
    with pytest.raises(ValueError):
        oracles.appendix_eigenpairs(0, 1)


def test_oracle_table_rows():
    rows = oracles.oracle_table()
    assert len(rows) == len(oracles.ORACLE_ALPHAS)
    assert all(len(r) == 7 for r in rows)
