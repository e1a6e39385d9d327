import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from gelfand.errors import DegenerateDensity
from gelfand.grid import DiskRadial, Rectangle, build_mesh
from gelfand.mfsolver import density, newton_solve
from gelfand.spectrum import (
    bessel_j,
    bessel_zero,
    cluster_tags,
    constrained_spectrum,
    disk_spectrum,
    first_sigma,
    nu1,
    rayleigh_quotient,
    sigma_hat1,
)


@pytest.fixture(scope="module")
def disk():
    return build_mesh(DiskRadial(0, 2048))


@pytest.fixture(scope="module")
def uniform(disk):
    return np.full(disk.size, 1 / math.pi)


@pytest.mark.parametrize("n, m", [(0, 1), (0, 3), (1, 1), (1, 2), (2, 1), (3, 4), (5, 2)])
def test_bessel_zero_matches_scipy(n, m):
    assert bessel_zero(n, m) == pytest.approx(special.jn_zeros(n, m)[-1], rel=1e-13)


@pytest.mark.parametrize("n", [0, 1, 2, 4])
@pytest.mark.parametrize("x", [0.0, 0.3, 2.4, 7.0, 15.0, 30.0])
def test_bessel_j_matches_scipy(n, x):
    assert bessel_j(n, x) == pytest.approx(special.jv(n, x), abs=1e-13)


def test_first_zero_of_j1():
    assert bessel_zero(1, 1) == pytest.approx(3.8317059702075, abs=1e-12)


def test_cluster_tags():
    assert cluster_tags([1.0, 1.0 + 1e-9, 2.0, 2.0, 2.0 + 1e-3]) == [0, 0, 1, 1, 2]


def test_uniform_disk_triple_cluster(disk, uniform):
    res = disk_spectrum(disk, uniform, 0.0, k=4)
    target = math.pi * bessel_zero(1, 1) ** 2
    np.testing.assert_allclose(res.sigmas[:3], target, rtol=1e-3)
    assert res.multiplicities()[:3] == [3, 3, 3]
    assert sorted(res.modes[:3]) == [0, 1, 1]
    assert res.sigmas[3] == pytest.approx(math.pi * bessel_zero(2, 1) ** 2, rel=1e-3)
    assert np.all(res.residuals <= 1e-8)


def test_nu1_uniform(disk, uniform):
    assert nu1(disk, uniform, 0.0) == pytest.approx(math.pi * bessel_zero(0, 1) ** 2, rel=1e-5)


def test_sigma_hat_equals_nu_at_zero(disk, uniform):
    assert sigma_hat1(disk, uniform, 0.0) == pytest.approx(nu1(disk, uniform, 0.0), rel=1e-8)


@pytest.fixture(scope="module")
def coarse():
    return build_mesh(DiskRadial(0, 256))


def _solution(mesh, lam):
    psi = None
    for t in np.linspace(0, lam, 21)[1:]:
        st_ = newton_solve(mesh, t, psi)
        psi = st_.psi
    return st_


@pytest.mark.parametrize("lam", [-8.0, -2.0])
def test_sigma_hat_positive_for_negative_lambda(coarse, lam):
    s = _solution(coarse, lam)
    assert sigma_hat1(coarse, s.rho, lam) > 0


def test_nu1_positive_at_two_pi(coarse):
    s = _solution(coarse, 2 * math.pi)
    assert nu1(coarse, s.rho, s.lam) > 0


@pytest.mark.parametrize("lam", [0.0, 4 * math.pi, 20.0])
def test_eigenpairs_normalized_and_orthogonal(coarse, lam):
    s = _solution(coarse, lam) if lam else newton_solve(coarse, 0.0)
    res = constrained_spectrum(coarse, s.rho, lam, k=3)
    w = coarse.weights * s.rho
    gram = np.empty((3, 3))
    for i, a in enumerate(res.phis):
        for j, b in enumerate(res.phis):
            a0 = a - w @ a
            b0 = b - w @ b
            gram[i, j] = w @ (a0 * b0)
    np.testing.assert_allclose(gram, np.eye(3), atol=1e-8)
    assert np.all(res.residuals <= 1e-8)
    assert np.all(np.diff(res.sigmas) > 0)


@pytest.mark.parametrize("lam", [0.0, 4 * math.pi, 20.0])
def test_rayleigh_round_trip(coarse, lam):
    s = _solution(coarse, lam) if lam else newton_solve(coarse, 0.0)
    res = constrained_spectrum(coarse, s.rho, lam, k=2)
    for sig, phi in zip(res.sigmas, res.phis):
        assert rayleigh_quotient(coarse, s.rho, lam, phi) == pytest.approx(sig, rel=1e-8)


@settings(max_examples=20, deadline=None)
@given(c=st.floats(min_value=1e-3, max_value=1e3) | st.floats(min_value=-1e3, max_value=-1e-3))
def test_rayleigh_scale_invariant(coarse, c):
    rho = np.full(coarse.size, 1 / math.pi)
    phi = np.cos(2 * coarse.coords) * (1 - coarse.coords**2)
    base = rayleigh_quotient(coarse, rho, 3.0, phi)
    assert rayleigh_quotient(coarse, rho, 3.0, c * phi) == pytest.approx(base, rel=1e-9)


def test_rectangle_spectrum_residuals():
    mesh = build_mesh(Rectangle(1.0, 1.0, 32, 32))
    s = newton_solve(mesh, 0.0)
    res = constrained_spectrum(mesh, s.rho, 0.0, k=4)
    assert np.all(res.residuals <= 1e-8)
    # on the square the two lowest antisymmetric modes are degenerate
    assert 2 in res.multiplicities()


def test_first_sigma_is_min_over_modes(coarse):
    s = _solution(coarse, 10.0)
    fs = first_sigma(coarse, s.rho, s.lam)
    m0 = constrained_spectrum(coarse, s.rho, s.lam, 1).sigmas[0]
    m1 = constrained_spectrum(coarse.companion(1), s.rho, s.lam, 1).sigmas[0]
    assert fs == pytest.approx(min(m0, m1), rel=1e-10)


@pytest.mark.parametrize("bad", [0.0, -1.0, np.nan])
def test_degenerate_density_rejected(coarse, bad):
    rho = np.full(coarse.size, 1 / math.pi)
    rho[10] = bad
    with pytest.raises(DegenerateDensity):
        constrained_spectrum(coarse, rho, 0.0)


def test_k_must_be_positive(coarse):
    with pytest.raises(ValueError):
        constrained_spectrum(coarse, np.full(coarse.size, 1 / math.pi), 0.0, k=0)
