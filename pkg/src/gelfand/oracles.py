"""Closed-form Liouville family on the unit disk.

For ``alpha > -1`` the radial functions

    u(r) = 2 log((1 + alpha) / (1 + alpha r^2))

solve ``-Lap u = mu e^u`` with ``mu = 8 alpha / (1 + alpha)^2`` and vanish
on ``r = 1``.  With ``c = 1 + alpha`` one finds ``int e^u = pi c`` and
``lam = mu int e^u = 8 pi alpha / c``, so ``alpha = lam / (8 pi - lam)``
covers the whole range ``lam < 8 pi``.  Negative ``alpha`` gives the
``lam < 0`` part of the branch.

Every quantity is available twice: as a closed form and by one-dimensional
adaptive quadrature of the explicit ``u``.  Neither path touches the mesh
or solver code.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List

import numpy as np
from scipy.integrate import quad

from .spectrum import bessel_zero

EIGHT_PI = 8 * math.pi


def _check_alpha(alpha):
    if not (isinstance(alpha, (int, float)) and math.isfinite(alpha) and alpha > 0):
        raise ValueError(f"alpha must be a positive real number, got {alpha!r}")


@dataclass(frozen=True)
class LiouvilleParam:
    alpha: float

    def __post_init__(self):
        _check_alpha(self.alpha)

    @property
    def c(self) -> float:
        return 1.0 + self.alpha

    @property
    def lam(self) -> float:
        return EIGHT_PI * self.alpha / self.c


@dataclass(frozen=True)
class LiouvilleRecord:
    alpha: float
    lam: float
    mu: float
    mass_eu: float
    E: float
    g: float
    mean_z: float
    u: Callable[[float], float]

    @property
    def lambda_(self) -> float:
        return self.lam


def _energy_factor(d):
    """``c (c log c - c + 1) / d^2`` with ``c = 1 + d``, stable near ``d = 0``."""
    d = np.asarray(d, dtype=float)
    c = 1.0 + d
    small = np.abs(d) < 1e-2
    out = np.empty_like(d)
    with np.errstate(divide="ignore", invalid="ignore"):
        big = c * (c * np.log(c) - c + 1.0) / d**2
    ds = np.where(small, d, 0.0)
    # c log c - c + 1 = sum_{k>=2} (-1)^k d^k / (k (k-1))
    series = sum((-1) ** k * ds ** (k - 2) / (k * (k - 1)) for k in range(2, 10))
    out[...] = np.where(small, c * series, big)
    return out


def _alpha_of_lambda(lam):
    lam = np.asarray(lam, dtype=float)
    if np.any(lam >= EIGHT_PI):
        raise ValueError("the disk branch exists only for lambda < 8 pi")
    return lam / (EIGHT_PI - lam)


def disk_mu(lam):
    """``mu(lam) = lam (8 pi - lam) / (8 pi^2)``."""
    lam = np.asarray(lam, dtype=float)
    return lam * (EIGHT_PI - lam) / (8 * math.pi**2)


def disk_mass(lam):
    return 8 * math.pi**2 / (EIGHT_PI - np.asarray(lam, dtype=float))


def disk_energy(lam):
    """``E(lam) = c (c log c - c + 1) / (8 pi (c - 1)^2)`` with ``c = 1 + alpha(lam)``."""
    return _energy_factor(_alpha_of_lambda(lam)) / EIGHT_PI


def disk_g(lam):
    """``g(lam) = (8 pi - 2 lam) / (8 pi - lam)``."""
    lam = np.asarray(lam, dtype=float)
    return (EIGHT_PI - 2 * lam) / (EIGHT_PI - lam)


def disk_mean_z(lam):
    return 1.0 / (EIGHT_PI - np.asarray(lam, dtype=float))


def disk_u(alpha: float) -> Callable[[float], float]:
    c = 1.0 + alpha
    return lambda r: 2.0 * math.log(c / (1.0 + alpha * r * r))


def liouville_closed_form(alpha: float) -> LiouvilleRecord:
    """Exact branch quantities of the disk solution with parameter ``alpha > 0``."""
    p = LiouvilleParam(alpha)
    lam = p.lam
    return LiouvilleRecord(
        alpha=p.alpha,
        lam=lam,
        mu=8 * p.alpha / p.c**2,
        mass_eu=math.pi * p.c,
        E=float(disk_energy(lam)),
        g=float(disk_g(lam)),
        mean_z=float(disk_mean_z(lam)),
        u=disk_u(p.alpha),
    )


def liouville_quadrature(alpha: float):
    """``(mass_eu, E)`` by adaptive quadrature of the explicit ``u``.

    ``E = <psi> / 2 = int u e^u / (2 lam int e^u)``.
    """
    p = LiouvilleParam(alpha)
    u = disk_u(p.alpha)
    opts = dict(epsabs=0.0, epsrel=1e-13, limit=200)
    mass = quad(lambda r: 2 * math.pi * r * math.exp(u(r)), 0.0, 1.0, **opts)[0]
    first = quad(lambda r: 2 * math.pi * r * u(r) * math.exp(u(r)), 0.0, 1.0, **opts)[0]
    return mass, first / (2 * p.lam * mass)


def disk_e0() -> float:
    """``E_0`` of the unit disk.

    The torsion function is ``h = (1 - r^2)/4`` with ``int h = pi/8``, so
    ``E_0 = (pi/8) / (2 pi^2) = 1/(16 pi)``.
    """
    return 1.0 / (16 * math.pi)


@dataclass(frozen=True)
class AppendixEntry:
    n: int
    m: int
    zero: float
    sigma: float
    multiplicity: int
    eigenfunctions: str


def appendix_eigenpairs(n_max: int, m_max: int) -> List[AppendixEntry]:
    """Spectrum of ``-Lap phi = sigma (phi - mean phi)`` on the unit disk.

    ``sigma_{n,m} = j_{n,m}^2`` with ``j_{n,m}`` the ``m``-th positive zero of
    ``J_n``.  The radial eigenfunctions share the values ``j_{1,m}^2``, so the
    ``n = 1`` entries carry three eigenfunctions and ``n >= 2`` carry two.
    """
    if n_max < 1 or m_max < 1:
        raise ValueError("n_max and m_max must be >= 1")
    out = []
    for n in range(1, n_max + 1):
        for m in range(1, m_max + 1):
            j = bessel_zero(n, m)
            if n == 1:
                desc = f"J0({j:.6f} r) - J0({j:.6f}), cos(t) J1({j:.6f} r), sin(t) J1({j:.6f} r)"
                mult = 3
            else:
                desc = f"cos({n} t) J{n}({j:.6f} r), sin({n} t) J{n}({j:.6f} r)"
                mult = 2
            out.append(AppendixEntry(n, m, j, j * j, mult, desc))
    out.sort(key=lambda e: (e.sigma, e.n))
    return out


ORACLE_ALPHAS = (0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 9.0)


def oracle_table(alphas=ORACLE_ALPHAS):
    """Rows ``(alpha, lambda, mu, mass_eu, E, g, mean_z)`` of closed-form values."""
    rows = []
    for a in alphas:
        r = liouville_closed_form(a)
        rows.append((r.alpha, r.lam, r.mu, r.mass_eu, r.E, r.g, r.mean_z))
    return rows
