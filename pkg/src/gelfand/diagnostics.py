"""Branch quantities (energy, Gel'fand parameter, g, z, w, eta) and the
identity/inequality checks run along a computed branch.

All derivative fields solve systems with the Newton matrix ``J`` of the
converged state:

    J z   = W rho                                  (z = du/dlam)
    J eta = W rho psi_0                            (eta = dpsi/dlam)
    J w   = W rho (2 z_0 + lam (z_0^2)_0)          (w = dz/dlam)

Because ``J`` is the exact derivative of the discrete residual, the
discrete ``z``, ``eta`` and ``w`` are exact derivatives of the discrete
branch; finite differences along the branch are independent cross-checks.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import List, NamedTuple, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import oracles
from .errors import EnergyInconsistency, NoSignChange, NonConvergence, NonMonotoneEnergy, SingularSystem
from .grid import Mesh, build_mesh, norm, solve_dirichlet
from .mfsolver import (
    EIGHT_PI,
    Branch,
    ContinuationConfig,
    MeanFieldState,
    apply_jacobian,
    continue_branch,
    newton_solve,
    solve_eta as _solve_eta,
)
from .spectrum import constrained_spectrum, first_sigma, nu1 as _nu1

log = logging.getLogger(__name__)

FOUR_PI = 4 * math.pi


@dataclass
class BranchPoint:
    lam: float
    E: float
    mu: float
    g: float
    sigma1: float
    nu1: float
    mean_z: float
    min_z: float
    mass_eu: float
    newton_iters: int
    # derivative data consumed by verify_branch
    mean_eta: float = math.nan
    eta_identity: float = math.nan
    a: float = math.nan
    b: float = math.nan
    max_abs_z: float = math.nan
    energy_spread: float = math.nan
    # sgn(u) |u|_inf with u = lam psi (psi > 0, so this is lam max psi)
    u_sup: float = math.nan

    CSV_FIELDS = ("lambda", "E", "mu", "g", "sigma1", "nu1", "mean_z", "min_z", "mass_eu", "newton_iters")

    def row(self):
        return (self.lam, self.E, self.mu, self.g, self.sigma1, self.nu1,
                self.mean_z, self.min_z, self.mass_eu, self.newton_iters)


@dataclass
class DiagramPoint:
    E: float
    mu: float
    lam: float


# -- scalar quantities -----------------------------------------------------


def energy_forms(mesh: Mesh, state: MeanFieldState):
    """``(1/2 <psi>, 1/2 int |grad psi|^2, 1/2 int rho G[rho])``."""
    psi = state.psi
    half_mean = 0.5 * state.mean(psi)
    half_dirichlet = 0.5 * float(psi @ (mesh.stiffness @ psi))
    half_green = 0.5 * state.mean(solve_dirichlet(mesh, state.rho))
    return half_mean, half_dirichlet, half_green


def energy(mesh: Mesh, state: MeanFieldState, rtol: float = 1e-6) -> float:
    """Mean field energy ``E = 1/2 <psi>``, cross-checked against the other two forms."""
    forms = energy_forms(mesh, state)
    spread = (max(forms) - min(forms)) / abs(forms[0])
    if spread > rtol:
        raise EnergyInconsistency(f"energy forms disagree: {forms} (relative spread {spread:.2e})")
    return forms[0]


def energy_zero(mesh: Mesh) -> float:
    """``E_0 = int h / (2 |Omega|^2)`` with ``h`` the torsion function."""
    h = solve_dirichlet(mesh, np.ones(mesh.size))
    return float(mesh.weights @ h) / (2 * mesh.area**2)


def mu_of(state: MeanFieldState) -> float:
    return state.lam / state.mass_eu


def _checked_solve(state: MeanFieldState, rhs, solve=None, what="system"):
    solve = solve or state.jacobian
    x = solve(rhs)
    r = rhs - apply_jacobian(state.mesh, state.lam, state.rho, x)
    x = x + solve(r)
    r = rhs - apply_jacobian(state.mesh, state.lam, state.rho, x)
    # backward-error style test: residual against the size of the terms in J x
    scale = np.linalg.norm(rhs) + np.linalg.norm(state.mesh.stiffness @ x)
    if not np.all(np.isfinite(x)) or np.linalg.norm(r) > 1e-8 * max(scale, 1e-300):
        raise SingularSystem(f"{what}: relative residual {np.linalg.norm(r) / scale:.2e} at lambda={state.lam}")
    return x


def solve_z(mesh: Mesh, state: MeanFieldState, solve=None) -> np.ndarray:
    """``z = du/dlam``: ``-Lap z = rho + lam rho z_0``."""
    return _checked_solve(state, mesh.weights * state.rho, solve, "z-equation")


def solve_w(mesh: Mesh, state: MeanFieldState, z, solve=None) -> np.ndarray:
    """``w = dz/dlam``: ``-Lap w = 2 rho z_0 + lam rho (z_0^2)_0 + lam rho w_0``."""
    z0 = state.centered(z)
    z0sq = z0 * z0
    rhs = mesh.weights * state.rho * (2 * z0 + state.lam * (z0sq - state.mean(z0sq)))
    return _checked_solve(state, rhs, solve, "w-equation")


def solve_eta(mesh: Mesh, state: MeanFieldState, solve=None) -> np.ndarray:
    """``eta = dpsi/dlam``: ``-Lap eta = rho psi_0 + lam rho eta_0``."""
    rhs = mesh.weights * state.rho * state.centered(state.psi)
    return _checked_solve(state, rhs, solve, "eta-equation")


def g_and_coeffs(state: MeanFieldState, z):
    """``g = 1 - lam <z>`` and the coefficients of ``g' = a g + b``."""
    lam = state.lam
    mz = state.mean(z)
    z0 = z - mz
    g = 1.0 - lam * mz
    a = -(2 * lam * state.mean(z0 * z0) + lam * state.mean(z * z) + mz)
    b = -lam * lam * state.mean(z**3)
    return g, a, b


def functional_value(mesh: Mesh, lam: float, u) -> float:
    """``J(u) = 1/2 int |grad u|^2 - lam log int e^u``."""
    u = mesh.check(u, "u")
    m = float(u.max())
    log_mass = m + math.log(float(mesh.weights @ np.exp(u - m)))
    return 0.5 * float(u @ (mesh.stiffness @ u)) - lam * log_mass


def branch_point(mesh: Mesh, state: MeanFieldState, spectral: bool = True) -> BranchPoint:
    """Post-process a converged state into a :class:`BranchPoint`."""
    solve = state.jacobian
    forms = energy_forms(mesh, state)
    E = forms[0]
    z = solve_z(mesh, state, solve)
    eta = solve_eta(mesh, state, solve)
    g, a, b = g_and_coeffs(state, z)
    psi0 = state.centered(state.psi)
    eta0 = state.centered(eta)
    return BranchPoint(
        lam=state.lam,
        E=E,
        mu=mu_of(state),
        g=g,
        sigma1=first_sigma(mesh, state.rho, state.lam) if spectral else math.nan,
        nu1=_nu1(mesh, state.rho, state.lam) if spectral else math.nan,
        mean_z=state.mean(z),
        min_z=float(z.min()),
        mass_eu=state.mass_eu,
        newton_iters=state.newton_iters,
        mean_eta=state.mean(eta),
        eta_identity=state.mean(psi0 * psi0) + state.lam * state.mean(psi0 * eta0),
        a=a,
        b=b,
        max_abs_z=float(np.abs(z).max()),
        energy_spread=(max(forms) - min(forms)) / abs(E),
        u_sup=state.lam * float(state.psi.max()),
    )


def cheap_branch_point(mesh: Mesh, state: MeanFieldState) -> BranchPoint:
    return branch_point(mesh, state, spectral=False)


# -- bending point and diagram -------------------------------------------


class LambdaStar(NamedTuple):
    lambda_star: float
    E_star: float
    mu_star: float


def find_lambda_star(branch: Branch, g_tol: float = 1e-8, lam_tol: float = 1e-6) -> LambdaStar:
    """Locate the sign change of ``g`` by bisection with fresh Newton solves."""
    mesh = branch.mesh
    gs = branch.column("g")
    idx = [i for i in range(len(gs) - 1) if gs[i] > 0 >= gs[i + 1]]
    if not idx:
        raise NoSignChange(f"g does not change sign on lambda in [{branch.lambdas[0]:.4g}, {branch.lambdas[-1]:.4g}]")
    i = idx[0]
    lo, hi = branch.states[i], branch.states[i + 1]
    if gs[i + 1] == 0.0:
        best = hi
    else:
        best = lo if abs(gs[i]) < abs(gs[i + 1]) else hi
        glo = gs[i]
        while hi.lam - lo.lam > lam_tol:
            mid_lam = 0.5 * (lo.lam + hi.lam)
            t = (mid_lam - lo.lam) / (hi.lam - lo.lam)
            guess = (1 - t) * lo.psi + t * hi.psi
            mid = newton_solve(mesh, mid_lam, guess)
            gmid, _, _ = g_and_coeffs(mid, solve_z(mesh, mid))
            best = mid
            if abs(gmid) <= g_tol:
                break
            if (gmid > 0) == (glo > 0):
                lo, glo = mid, gmid
            else:
                hi = mid
    lam_star = best.lam
    if not (FOUR_PI * (1 - 1e-3) <= lam_star < EIGHT_PI):
        log.warning("lambda_* = %.6g lies outside [4 pi, 8 pi)", lam_star)
    return LambdaStar(lam_star, energy(mesh, best), mu_of(best))


def mu_infty_diagram(branch: Branch) -> List[DiagramPoint]:
    """Re-parametrize the branch by energy: rows ``(E, mu, lambda)``."""
    E = branch.column("E")
    if np.any(np.diff(E) <= 0):
        k = int(np.argmin(np.diff(E)))
        raise NonMonotoneEnergy(
            f"energy not increasing between lambda={branch.points[k].lam:.6g} and {branch.points[k + 1].lam:.6g}"
        )
    return [DiagramPoint(p.E, p.mu, p.lam) for p in branch.points]


def diagram_shape(diagram: List[DiagramPoint]) -> dict:
    """Shape diagnostics of ``mu(E)`` over the computed range (trends only)."""
    E = np.array([d.E for d in diagram])
    mu = np.array([d.mu for d in diagram])
    lam = np.array([d.lam for d in diagram])
    dmu = np.diff(mu)
    interior_max = [i for i in range(1, len(mu) - 1) if mu[i] >= mu[i - 1] and mu[i] >= mu[i + 1]]
    interior_min = [i for i in range(1, len(mu) - 1) if mu[i] <= mu[i - 1] and mu[i] <= mu[i + 1]]
    i0 = int(np.argmin(np.abs(lam)))
    imax = int(np.argmax(mu))
    return {
        "n_interior_max": len(interior_max),
        "n_interior_min": len(interior_min),
        "i_max": imax,
        "E_at_max": float(E[imax]),
        "mu_at_max": float(mu[imax]),
        "mu_at_E0": float(mu[i0]),
        "E0_row": float(E[i0]),
        "mu_scale": float(np.abs(mu).max()),
        "increasing_before_max": bool(np.all(dmu[:imax] > 0)),
        "decreasing_after_max": bool(np.all(dmu[imax:] < 0)),
        "lambda_increasing": bool(np.all(np.diff(lam) > 0)),
    }


# -- verification ----------------------------------------------------------


@dataclass
class Check:
    name: str
    passed: bool
    residual: float
    tolerance: float
    note: str = ""

    def to_dict(self):
        d = {"name": self.name, "pass": bool(self.passed), "residual": self.residual, "tolerance": self.tolerance}
        if self.note:
            d["note"] = self.note
        return d


@dataclass
class VerificationReport:
    checks: List[Check] = field(default_factory=list)
    lambda_star: Optional[float] = None
    E_star: Optional[float] = None
    mu_star: Optional[float] = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failing(self) -> List[str]:
        return [c.name for c in self.checks if not c.passed]

    def add(self, name, residual, tolerance, passed=None, note=""):
        residual = float(residual)
        if passed is None:
            passed = math.isfinite(residual) and residual <= tolerance
        self.checks.append(Check(name, bool(passed), residual, float(tolerance), note))


def _interior_derivative(lam, f):
    """Second-order central differences on the (nonuniform) branch grid, interior points."""
    return np.gradient(f, lam)[1:-1]


def _fd_resolved(lam, *exact_derivatives, rtol=1e-3):
    """Interior points where central differences resolve the branch.

    The truncation error of the nonuniform central difference is about
    ``h_- h_+ |f3| / 6`` with ``f3`` the third derivative, estimated here from
    the exact derivative data.  Points where this exceeds ``rtol |f'|`` (the
    layer next to a discrete fold, where ``f'`` blows up) are left out of
    the finite difference checks.
    """
    hm = np.diff(lam)[:-1]
    hp = np.diff(lam)[1:]
    ok = np.ones(len(lam) - 2, dtype=bool)
    for fp in exact_derivatives:
        f3 = np.gradient(np.gradient(fp, lam), lam)[1:-1]
        ok &= hm * hp * np.abs(f3) / 6 <= rtol * np.abs(fp[1:-1])
    return ok


def _nearest(lams, targets):
    out = []
    for t in targets:
        if lams[0] <= t <= lams[-1]:
            i = int(np.argmin(np.abs(lams - t)))
            if i not in out:
                out.append(i)
    return out


def fourier_identity(mesh: Mesh, state: MeanFieldState, n_modes: int = 5):
    """``(sigma_j, alpha_j, beta_j)`` for the first constrained eigenfunctions.

    On the disk the radial functions ``psi`` and ``eta`` only see the
    radial (mode 0) eigenfunctions; the other modes give ``alpha = beta = 0``.
    """
    spec = constrained_spectrum(mesh, state.rho, state.lam, n_modes)
    eta = solve_eta(mesh, state)
    psi0 = state.centered(state.psi)
    eta0 = state.centered(eta)
    rows = []
    for sigma, phi in zip(spec.sigmas, spec.phis):
        phi0 = state.centered(phi)
        alpha = state.mean(phi0 * psi0)
        beta = state.mean(phi0 * eta0)
        rows.append((float(sigma), alpha, beta))
    return rows, math.sqrt(state.mean(psi0 * psi0))


def w_identity(mesh: Mesh, state: MeanFieldState):
    """``(<w>, 2<z_0^2> + lam <z_0^3>)``."""
    z = solve_z(mesh, state)
    w = solve_w(mesh, state, z)
    z0 = state.centered(z)
    return state.mean(w), 2 * state.mean(z0**2) + state.lam * state.mean(z0**3)


def verify_branch(
    branch: Branch,
    fourier_lambdas=(-5.0, 2 * math.pi, 4 * math.pi, 6 * math.pi),
    w_lambdas=(2 * math.pi, 4 * math.pi, 6 * math.pi),
    n_fourier: int = 5,
    locate_lambda_star: bool = True,
    disk_oracle: Optional[bool] = None,
) -> VerificationReport:
    """Run the identity and inequality suite along ``branch``."""
    if len(branch) < 5:
        raise ValueError("verify_branch needs at least 5 branch points")
    mesh = branch.mesh
    rep = VerificationReport()
    lam = branch.column("lam")
    E = branch.column("E")
    g = branch.column("g")
    mean_eta = branch.column("mean_eta")
    inner = slice(1, -1)

    # energy: three forms, dE/dlam = <eta>, monotonicity, <eta> identity
    rep.add("energy_forms_agree", np.max(branch.column("energy_spread")), 1e-6)
    a, b = branch.column("a"), branch.column("b")
    ok = _fd_resolved(lam, mean_eta, a * g + b)
    skipped = int((~ok).sum())
    fd_note = "central differences"
    if skipped:
        fd_note += f"; {skipped} unresolved point(s) next to a discrete fold skipped"
    dE = _interior_derivative(lam, E)
    rel = np.abs(dE - mean_eta[inner]) / np.abs(mean_eta[inner])
    rep.add("dE_dlambda_equals_mean_eta", rel[ok].max(), 1e-2, note=fd_note)
    rep.add("dE_dlambda_positive", -dE.min(), 0.0, passed=bool(np.all(dE > 0)),
            note="residual is -min(dE/dlambda) over all interior points")
    eta_id = branch.column("eta_identity")
    rep.add("mean_eta_identity", np.max(np.abs(mean_eta - eta_id) / np.abs(mean_eta)), 1e-2)

    # g-ODE, pointwise and integrated
    dg = _interior_derivative(lam, g)
    ode = np.abs(dg - (a[inner] * g[inner] + b[inner]))[ok]
    rep.add("g_ode_residual", ode.max() / np.abs(dg[ok]).max(), 1e-2,
            note="max |g'_fd - (a g + b)| / max |g'_fd|; " + fd_note)
    i0 = int(np.argmin(np.abs(lam)))
    window = lam <= FOUR_PI
    if abs(lam[i0]) < 1e-14 and window.sum() >= 3:
        # e^{-A} grows by many decades per step past the bending point, where
        # trapezoid accumulation cannot resolve it; the check stops at 4 pi
        lw, aw, bw, gw = lam[window], a[window], b[window], g[window]
        A = cumulative_trapezoid(aw, lw, initial=0.0)
        A -= A[i0]
        I = cumulative_trapezoid(np.exp(-A) * bw, lw, initial=0.0)
        I -= I[i0]
        eg = np.exp(-A) * gw
        resid = np.abs(eg - 1.0 - I) / np.maximum.reduce([np.ones_like(I), np.abs(eg), np.abs(I)])
        rep.add("g_ode_integrated", resid.max(), 1e-2,
                note="trapezoid accumulation on lambda <= 4 pi, relative to max(1, |e^-A g|, |int e^-A b|)")

    # integral maximum principle and sign structure of g
    mean_z = branch.column("mean_z")
    rep.add("mean_z_positive", -mean_z.min(), 0.0, passed=bool(np.all(mean_z > 0)), note="residual is -min <z>")
    min_z, max_abs_z = branch.column("min_z"), branch.column("max_abs_z")
    nonneg = g >= 0
    if nonneg.any():
        worst = float(np.max(-min_z[nonneg] / max_abs_z[nonneg]))
        rep.add("max_principle_where_g_nonneg", worst, 1e-6, note="max over g>=0 of -min z / |z|_inf")
    below = lam < FOUR_PI
    rep.add("g_positive_below_4pi", -g[below].min(), 0.0, passed=bool(np.all(g[below] > 0)),
            note="residual is -min g on lambda < 4 pi")
    changes = int(np.sum(np.sign(g[1:]) != np.sign(g[:-1])))
    reaches = g[-1] < 0
    rep.add("g_single_sign_change", changes, 1, passed=(changes == 1) if reaches else (changes == 0),
            note="number of sign changes" + ("" if reaches else "; branch ends before the bending point"))

    # mass_eu * dmu/dlam against g
    mu, mass = branch.column("mu"), branch.column("mass_eu")
    dmu = _interior_derivative(lam, mu)
    rel = np.abs(g[inner] - mass[inner] * dmu) / np.maximum(np.abs(g[inner]), 1.0)
    rep.add("g_equals_mass_times_dmu", rel[ok].max(), 1e-2, note="relative to max(|g|, 1); " + fd_note)

    # spectral positivity
    s1 = branch.column("sigma1")
    have = np.isfinite(s1)
    if have.any():
        rep.add("sigma1_positive", -s1[have].min(), 0.0, passed=bool(np.all(s1[have] > 0)), note="residual is -min sigma1")
        lps = lam[have] + s1[have]
        rep.add("lambda_plus_sigma1_positive", -lps.min(), 0.0, passed=bool(np.all(lps > 0)),
                note="residual is -min(lambda + sigma1)")

    # Fourier identity and <w> identity at sampled points
    fmax = 0.0
    for i in _nearest(lam, fourier_lambdas):
        rows, _ = fourier_identity(mesh, branch.states[i], n_fourier)
        # coefficients that vanish by symmetry come out at eigenvector-error level
        floor = 1e-4 * max(abs(r[1]) for r in rows)
        for sigma, alpha, beta in rows:
            fmax = max(fmax, abs(sigma * beta - alpha) / max(abs(alpha), floor))
    rep.add("fourier_sigma_beta_equals_alpha", fmax, 1e-2,
            note=f"j <= {n_fourier}, relative to max(|alpha_j|, 1e-4 max_k |alpha_k|)")
    wmax = 0.0
    for i in _nearest(lam, w_lambdas):
        lhs, rhs = w_identity(mesh, branch.states[i])
        wmax = max(wmax, abs(lhs - rhs) / abs(rhs))
    rep.add("mean_w_identity", wmax, 1e-2)

    # energy-parametrized diagram (trends over the computed range)
    try:
        shape = diagram_shape(mu_infty_diagram(branch))
        ok = True
    except NonMonotoneEnergy as exc:
        ok = False
        rep.add("diagram_energy_monotone", 1.0, 0.0, passed=False, note=str(exc))
    if ok:
        rep.add("diagram_lambda_increasing_in_E", 0.0, 0.0, passed=shape["lambda_increasing"])
        if g[-1] < 0:
            rep.add("diagram_single_interior_max", shape["n_interior_max"], 1,
                    passed=shape["n_interior_max"] == 1 and shape["n_interior_min"] == 0
                    and shape["increasing_before_max"] and shape["decreasing_after_max"],
                    note="trend over computed range")
            rep.add("diagram_tail_decreasing", 0.0, 0.0, passed=shape["decreasing_after_max"],
                    note="mu decreasing toward 0 on the tail; limit not reachable")
        rep.add("diagram_mu_at_E0", abs(shape["mu_at_E0"]) / shape["mu_scale"], 1e-6,
                note="relative to max |mu|")

    # bending point
    if locate_lambda_star:
        try:
            star = find_lambda_star(branch)
            rep.lambda_star, rep.E_star, rep.mu_star = star
            rep.add("lambda_star_in_interval", 0.0, 0.0,
                    passed=FOUR_PI * (1 - 1e-3) <= star.lambda_star < EIGHT_PI,
                    note="lambda_* in [4 pi, 8 pi) up to relative 1e-3 discretization slack")
        except NoSignChange as exc:
            rep.add("lambda_star_in_interval", math.nan, 0.0, passed=False, note=str(exc))

    if disk_oracle is None:
        disk_oracle = mesh.is_disk
    if disk_oracle:
        _disk_oracle_checks(rep, branch)
    return rep


def oracle_errors(lam, mu, E, g):
    """Maximum relative errors of ``(mu, E, g)`` against the disk closed forms.

    At ``lam = 0`` the exact ``mu`` vanishes and the absolute error is used.
    """
    lam = np.asarray(lam, dtype=float)
    mu_ex = oracles.disk_mu(lam)
    zero = mu_ex == 0
    mu_rel = np.abs(np.asarray(mu) - mu_ex) / np.where(zero, 1.0, np.abs(mu_ex))
    E_rel = np.abs(np.asarray(E) / oracles.disk_energy(lam) - 1)
    g_rel = np.abs(np.asarray(g) / oracles.disk_g(lam) - 1)
    return float(mu_rel.max()), float(E_rel.max()), float(g_rel.max())


def _disk_oracle_checks(rep: VerificationReport, branch: Branch):
    lam = branch.column("lam")
    raw = oracle_errors(lam, branch.column("mu"), branch.column("E"), branch.column("g"))
    ext = richardson_columns(branch)
    best = oracle_errors(lam, ext["mu"], ext["E"], ext["g"])
    for name, tol, r, e in zip(("mu", "E", "g"), (1e-4, 1e-3, 1e-3), raw, best):
        rep.add(f"disk_oracle_{name}", e, tol,
                note=f"one Richardson step against n/2; unextrapolated error {r:.3e}")
    if rep.lambda_star is not None:
        rep.add("disk_oracle_lambda_star", abs(rep.lambda_star / FOUR_PI - 1), 1e-3)
        rep.add("disk_oracle_mu_star", abs(rep.mu_star - 2.0), 2e-3)
        rep.add("disk_oracle_E_star", abs(rep.E_star - oracles.liouville_closed_form(1.0).E), 1e-4)


# -- first/second kind evidence -------------------------------------------


@dataclass
class KindEvidence:
    verdict: str
    E_last: float
    lambda_last: float
    growth_exponent: float
    resolutions: list = field(default_factory=list)
    note: str = "numerical evidence only, not a proof"


def _growth(branch: Branch, window: float = 1.0) -> float:
    """Slope of ``E`` against ``log(1/(8 pi - lam))`` over the tail, times ``8 pi``.

    A blow-up profile gives about 1; a bounded energy gives about 0.
    """
    lam = branch.lambdas
    E = branch.column("E")
    s = -np.log(EIGHT_PI - lam)
    tail = s >= s[-1] - window
    if tail.sum() < 3:
        tail = np.arange(len(s)) >= len(s) - 3
    slope = np.polyfit(s[tail], E[tail], 1)[0]
    return float(EIGHT_PI * slope)


def restrict(mesh: Mesh, coarse: Mesh, f) -> np.ndarray:
    """Average ``f`` over the fine cells making up each cell of ``coarse``."""
    f = mesh.check(f)
    if mesh.is_disk:
        if mesh.spec.n_r != 2 * coarse.spec.n_r:
            raise ValueError("restriction needs exactly half the radial resolution")
        return f.reshape(-1, 2).mean(axis=1)
    sp_, sc = mesh.spec, coarse.spec
    if (sp_.n_x, sp_.n_y) != (2 * sc.n_x, 2 * sc.n_y):
        raise ValueError("restriction needs exactly half the resolution in each direction")
    return f.reshape(sc.n_y, 2, sc.n_x, 2).mean(axis=(1, 3)).ravel()


def richardson_columns(branch: Branch, names=("mu", "E", "g")) -> dict:
    """One Richardson step for second-order data: ``(4 f_h - f_{2h}) / 3``.

    The branch is re-solved on the half-resolution mesh at the same ``lam``
    values, warm-started from the restricted fine solution.  Where the
    coarse solve fails the entry is ``nan``.
    """
    mesh = branch.mesh
    coarse = coarser(mesh)
    cols = {n: [] for n in names}
    for state, point in zip(branch.states, branch.points):
        guess = restrict(mesh, coarse, state.psi)
        try:
            cp = cheap_branch_point(coarse, newton_solve(coarse, state.lam, guess))
        except NonConvergence:
            # the coarse branch may fold before lam; no extrapolated value there
            for n in names:
                cols[n].append(math.nan)
            continue
        for n in names:
            cols[n].append((4 * getattr(point, n) - getattr(cp, n)) / 3)
    return {n: np.array(v) for n, v in cols.items()}


def coarser(mesh: Mesh) -> Mesh:
    from .grid import DiskRadial, Rectangle

    sp = mesh.spec
    if isinstance(sp, DiskRadial):
        return build_mesh(DiskRadial(sp.mode, max(16, sp.n_r // 2)))
    return build_mesh(Rectangle(sp.a, sp.b, max(16, sp.n_x // 2), max(16, sp.n_y // 2)))


def classify_domain(mesh: Mesh, cfg: ContinuationConfig) -> KindEvidence:
    """Run the branch toward ``8 pi`` at two resolutions and weigh the energy growth."""
    results = []
    for m in (coarser(mesh), mesh):
        c = replace(cfg, lambda_start=max(cfg.lambda_start, 0.0))
        branch = continue_branch(m, c, postprocess=cheap_branch_point)
        last = branch.points[-1]
        results.append({
            "n": m.size,
            "E_last": last.E,
            "lambda_last": last.lam,
            "growth": _growth(branch),
            "hit_cap": branch.stop_reason == "energy_cap",
        })
    coarse, fine = results
    growth = fine["growth"]
    if all(r["hit_cap"] and r["growth"] >= 0.5 for r in results) and 0.5 <= coarse["growth"] / growth <= 2.0:
        verdict = "FirstKindEvidence"
    elif not any(r["hit_cap"] for r in results) and all(r["growth"] < 0.25 for r in results):
        verdict = "SecondKindEvidence"
    else:
        verdict = "Inconclusive"
    return KindEvidence(verdict, fine["E_last"], fine["lambda_last"], growth, results)
