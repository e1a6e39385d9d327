"""Constrained spectrum of the linearized mean field operator.

With ``B = W R - v v^T`` (``v = w rho``) the eigenproblem
``-Lap phi - lam rho phi_0 = sigma rho phi_0`` becomes the symmetric pencil

    K phi = (lam + sigma) B phi.

``B`` is positive semidefinite with the constants as kernel; constants are
not in the zero-Dirichlet space, so the pencil is solved on interior nodes
as is.  For a disk mode ``n >= 1`` the density average of
``f(r) cos(n theta)`` vanishes and ``B`` reduces to ``W R``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
import scipy.linalg as sla

from .errors import DegenerateDensity, EigenNonConvergence
from .grid import Mesh

CLUSTER_RTOL = 1e-6


@dataclass
class SpectrumResult:
    sigmas: np.ndarray
    phis: List[np.ndarray] = field(repr=False)
    residuals: np.ndarray = field(repr=False)
    clusters: List[int] = field(default_factory=list)
    modes: List[int] = field(default_factory=list)
    iterations: int = 0
    # position of each entry within its angular mode (0-based)
    indices: List[int] = field(default_factory=list)

    def multiplicities(self) -> List[int]:
        counts = {}
        for c in self.clusters:
            counts[c] = counts.get(c, 0) + 1
        return [counts[c] for c in self.clusters]


def cluster_tags(values, rtol=CLUSTER_RTOL) -> List[int]:
    """Label sorted eigenvalues; neighbours within relative gap ``rtol`` share a label."""
    tags, tag = [], 0
    for i, x in enumerate(values):
        if i and abs(x - values[i - 1]) > rtol * max(abs(x), abs(values[i - 1])):
            tag += 1
        tags.append(tag)
    return tags


def subspace_iteration(
    solve: Callable[[np.ndarray], np.ndarray],
    A,
    B,
    n: int,
    k: int,
    block: Optional[int] = None,
    tol: float = 1e-10,
    max_iter: int = 5000,
    seed: int = 0,
    res_tol: Optional[float] = None,
    weights=None,
):
    """Smallest ``k`` eigenpairs of the pencil ``A x = tau B x``.

    ``solve`` applies ``(A - s B)^{-1}`` for some shift ``s`` below the wanted
    eigenvalues (usually ``s = 0``).  Block inverse iteration with
    Rayleigh-Ritz on ``A``/``B``; leading Ritz pairs whose value has
    settled to ``tol`` are locked and no longer iterated.

    A settled value only pins the vector to about ``sqrt(tol)``.  With
    ``res_tol`` a pair also needs ``|A x - tau B x| <= res_tol tau |B x|``,
    in the norm ``sum(r^2 / weights)`` when ``weights`` is given.
    """
    wi = 1.0 if weights is None else 1.0 / np.asarray(weights)[:, None]

    def small_residual(tau, X):
        if res_tol is None:
            return np.ones(len(tau), dtype=bool)
        BX = B @ X
        R = A @ X - BX * tau
        num = np.sqrt(np.sum(R * R * wi, axis=0))
        den = np.abs(tau) * np.sqrt(np.sum(BX * BX * wi, axis=0))
        return num <= res_tol * den

    p = min(n, block or max(2 * k, k + 6))
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    locked = np.zeros((n, 0))
    prev = None
    for it in range(1, max_iter + 1):
        Y = solve(B @ X)
        V = np.hstack([locked, Y])
        # orthonormalize for conditioning of the small problem
        V, _ = np.linalg.qr(V)
        AV, BV = A @ V, B @ V
        a = V.T @ AV
        b = V.T @ BV
        a = 0.5 * (a + a.T)
        b = 0.5 * (b + b.T)
        theta, C = sla.eigh(b, a)  # theta = 1/tau, ascending
        theta, C = theta[::-1], C[:, ::-1]
        tau = 1.0 / theta
        X_all = V @ C
        if prev is not None:
            settled = np.abs(tau[:k] - prev[:k]) <= tol * np.abs(tau[:k])
            if res_tol is not None and settled[0]:
                settled &= small_residual(tau[:k], X_all[:, :k])
            nlock = 0
            while nlock < k and settled[nlock]:
                nlock += 1
            if nlock == k:
                return tau[:k], X_all[:, :k], it
            locked = X_all[:, :nlock]
            X = X_all[:, nlock:p]
        else:
            X = X_all[:, :p]
        prev = tau
    raise EigenNonConvergence(f"subspace iteration did not settle in {max_iter} iterations")


def _pencil(mesh: Mesh, rho, lam: float, constrained: bool = True):
    rho = mesh.check(rho, "rho")
    if not np.all(rho > 0):
        raise DegenerateDensity("density must be finite and strictly positive")
    v = mesh.weights * rho
    WR = _Diag(v)
    if constrained and mesh.mode == 0:
        return _RankOneUpdate(v, v)
    return WR


class _Diag:
    def __init__(self, d):
        self.d = d

    def __matmul__(self, X):
        return self.d[:, None] * X if X.ndim == 2 else self.d * X


class _RankOneUpdate:
    """``diag(d) - v v^T``."""

    def __init__(self, d, v):
        self.d, self.v = d, v

    def __matmul__(self, X):
        if X.ndim == 2:
            return self.d[:, None] * X - np.outer(self.v, self.v @ X)
        return self.d * X - self.v * (self.v @ X)


def _b_mean(mesh, rho, phi):
    if mesh.mode == 0:
        return float(mesh.weights @ (rho * phi))
    return 0.0


def _normalize(mesh, rho, phi):
    """Scale so that ``int rho phi_0^2 = 1`` (mode ``n >= 1``: profile of ``f cos(n theta)``)."""
    phi0 = phi - _b_mean(mesh, rho, phi)
    q = float(mesh.weights @ (rho * phi0**2))
    if mesh.mode > 0:
        q *= 0.5
    phi = phi / math.sqrt(q)
    # deterministic sign: largest-magnitude entry positive
    if phi[np.argmax(np.abs(phi))] < 0:
        phi = -phi
    return phi


def constrained_spectrum(mesh: Mesh, rho, lam: float, k: int = 1, tol: float = 1e-10,
                         res_tol: Optional[float] = 1e-9) -> SpectrumResult:
    """The ``k`` smallest constrained eigenvalues ``sigma`` at ``(lam, rho)``.

    ``res_tol=None`` skips the eigenvector residual test (values only).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    B = _pencil(mesh, rho, lam)
    K = mesh.stiffness
    tau, X, its = subspace_iteration(mesh.stiffness_solver, K, B, mesh.size, k, tol=tol,
                                     res_tol=res_tol, weights=mesh.weights)
    sigmas = tau - lam
    phis, res = [], []
    for j in range(k):
        phi = _normalize(mesh, rho, X[:, j])
        r = (K @ phi - tau[j] * (B @ phi)) / mesh.weights
        scale = tau[j] * np.sqrt(mesh.weights @ ((B @ phi) / mesh.weights) ** 2)
        res.append(float(np.sqrt(mesh.weights @ r**2) / scale))
        phis.append(phi)
    return SpectrumResult(
        np.asarray(sigmas), phis, np.asarray(res), cluster_tags(sigmas), [mesh.mode] * k, its, list(range(k))
    )


def rayleigh_quotient(mesh: Mesh, rho, lam: float, phi) -> float:
    """``(int |grad phi|^2 - lam int rho phi_0^2) / int rho phi_0^2``."""
    phi = mesh.check(phi, "phi")
    phi0 = phi - _b_mean(mesh, rho, phi)
    q = float(mesh.weights @ (rho * phi0**2))
    return (float(phi @ (mesh.stiffness @ phi)) - lam * q) / q


def nu1(mesh: Mesh, rho, lam: float) -> float:
    """First eigenvalue of ``-Lap phi - lam rho phi = nu rho phi``."""
    WR = _pencil(mesh, rho, lam, constrained=False)
    tau, _, _ = subspace_iteration(mesh.stiffness_solver, mesh.stiffness, WR, mesh.size, 1)
    return float(tau[0] - lam)


def sigma_hat1(mesh: Mesh, rho, lam: float, jacobian_solve=None) -> float:
    """First eigenvalue of ``(int |grad phi|^2 - lam int rho (phi^2 - <phi>^2)) / int rho phi^2``.

    The numerator is the quadratic form of the Newton matrix ``J``;
    ``jacobian_solve`` may pass an existing factorization of ``J``.
    """
    from .mfsolver import apply_jacobian, jacobian_solver

    rho = mesh.check(rho, "rho")
    WR = _pencil(mesh, rho, lam, constrained=False)
    solve = jacobian_solve or jacobian_solver(mesh, lam, rho)

    class _J:
        def __matmul__(self, X):
            if X.ndim == 2:
                return np.column_stack([apply_jacobian(mesh, lam, rho, x) for x in X.T])
            return apply_jacobian(mesh, lam, rho, X)

    tau, _, _ = subspace_iteration(solve, _J(), WR, mesh.size, 1)
    return float(tau[0])


def disk_spectrum(mesh: Mesh, rho, lam: float, k: int = 4, n_max: int = 8, tol: float = 1e-10,
                  cluster_rtol: float = CLUSTER_RTOL) -> SpectrumResult:
    """Merge per-mode spectra of a radial density on the disk.

    Modes ``n >= 1`` contribute each eigenvalue twice (cos and sin).
    Entries are ordered by ``(value, mode, index)``.
    """
    entries = []
    for n in range(n_max + 1):
        m = mesh.companion(n)
        kn = k if n == 0 else (k + 1) // 2
        res = constrained_spectrum(m, rho, lam, kn, tol)
        copies = 1 if n == 0 else 2
        for j in range(kn):
            for _ in range(copies):
                entries.append((res.sigmas[j], n, j, res.phis[j], res.residuals[j]))
        if n > 0 and res.sigmas[0] > max(e[0] for e in sorted(entries)[:k]) and len(entries) >= k:
            break
    entries.sort(key=lambda e: (e[0], e[1], e[2]))
    entries = entries[:k]
    sigmas = np.array([e[0] for e in entries])
    return SpectrumResult(
        sigmas,
        [e[3] for e in entries],
        np.array([e[4] for e in entries]),
        cluster_tags(sigmas, cluster_rtol),
        [e[1] for e in entries],
        indices=[e[2] for e in entries],
    )


def first_sigma(mesh: Mesh, rho, lam: float) -> float:
    """Smallest constrained eigenvalue over all angular modes.

    On the disk only modes 0 and 1 can attain it: for ``n >= 1`` the
    quadratic form grows with ``n^2``.
    """
    s = constrained_spectrum(mesh, rho, lam, 1, res_tol=None).sigmas[0]
    if mesh.is_disk:
        s = min(s, constrained_spectrum(mesh.companion(1), rho, lam, 1, res_tol=None).sigmas[0])
    return float(s)


# -- Bessel zeros ---------------------------------------------------------

_SERIES_MAX_X = 12.0


def _jn_series(n: int, x: float) -> float:
    term = (0.5 * x) ** n / math.factorial(n)
    q = -0.25 * x * x
    terms = [term]
    k = 0
    peak = abs(term)
    while True:
        k += 1
        term *= q / (k * (n + k))
        terms.append(term)
        peak = max(peak, abs(term))
        # terms decrease monotonically once k exceeds x/2
        if k > 0.5 * x and abs(term) <= 1e-20 * peak:
            break
    return math.fsum(terms)


def _jn_miller(n: int, x: float) -> float:
    """Backward recurrence normalized by ``J_0 + 2 sum J_2k = 1``."""
    start = 2 * ((max(n, int(x)) + 15 + int(math.sqrt(40 * max(n, x)))) // 2)
    j_next, j = 0.0, 1e-30
    total, result = 0.0, 0.0
    for m in range(start, 0, -1):
        j_prev = 2 * m / x * j - j_next
        j_next, j = j, j_prev
        if abs(j) > 1e200:
            j, j_next, total, result = j * 1e-200, j_next * 1e-200, total * 1e-200, result * 1e-200
        if (m - 1) % 2 == 0 and m - 1 > 0:
            total += j
        if m - 1 == n:
            result = j
    total = 2 * total + j  # j is now J_0 (unnormalized)
    return result / total


def bessel_j(n: int, x: float) -> float:
    """Bessel function of the first kind ``J_n(x)`` for integer ``n >= 0``, ``x >= 0``."""
    if x == 0.0:
        return 1.0 if n == 0 else 0.0
    if x <= _SERIES_MAX_X:
        return _jn_series(n, x)
    return _jn_miller(n, x)


def _bisect(f, lo, hi, flo, xtol=1e-15):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= xtol * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


def bessel_zero(n: int, m: int) -> float:
    """The ``m``-th positive zero of ``J_n``."""
    if n < 0 or m < 1:
        raise ValueError("need n >= 0 and m >= 1")
    f = lambda x: bessel_j(n, x)
    step = 0.25
    lo = max(n, 0.5)
    flo = f(lo)
    found = 0
    while True:
        hi = lo + step
        fhi = f(hi)
        if (flo > 0) != (fhi > 0):
            found += 1
            if found == m:
                return _bisect(f, lo, hi, flo)
        lo, flo = hi, fhi
