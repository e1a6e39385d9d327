"""Newton solver and natural-parameter continuation for the mean field problem.

The discrete problem is ``K psi = W rho(psi)`` with
``rho = exp(lam psi) / sum(w exp(lam psi))``.  Its Frechet derivative is

    J = K - lam (W R - v v^T),   R = diag(rho),  v = w * rho,

which is symmetric, and positive definite exactly when the first
constrained eigenvalue ``sigma_1`` is positive.  ``J`` is dense because of
the rank-one term, so systems with it are solved through the sparse
bordered matrix ``[[K - lam W R, lam v], [v^T, -1]]``.  The bordered form
stays well conditioned where ``K - lam W R`` alone is singular, which
happens precisely at the bending point of the branch.
"""
from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import LambdaOutOfRange, NonConvergence, StepUnderflow
from .grid import Mesh, norm, solve_dirichlet

log = logging.getLogger(__name__)

EIGHT_PI = 8 * math.pi


def density(mesh: Mesh, lam: float, psi) -> tuple:
    """Return ``(rho, mass_eu)`` for ``psi`` at parameter ``lam``."""
    rho, log_mass = _density(mesh, lam, psi)
    return rho, math.exp(log_mass)


def _density(mesh: Mesh, lam: float, psi):
    psi = mesh.check(psi, "psi")
    if not np.all(np.isfinite(psi)):
        raise ValueError("psi contains non-finite values")
    t = lam * psi
    m = float(t.max())
    e = np.exp(t - m)
    s = float(mesh.weights @ e)
    return e / s, m + math.log(s)


def jacobian_solver(mesh: Mesh, lam: float, rho) -> Callable[[np.ndarray], np.ndarray]:
    """Factorize ``J = K - lam (W R - v v^T)`` and return a solve function."""
    v = mesh.weights * rho
    n = mesh.size
    if lam == 0.0:
        solve_k = mesh.stiffness_solver
        return lambda b: solve_k(b)
    T = mesh.stiffness - lam * sp.diags(v)
    col = sp.csc_matrix(lam * v.reshape(-1, 1))
    row = sp.csr_matrix(v.reshape(1, -1))
    M = sp.bmat([[T, col], [row, sp.csr_matrix([[-1.0]])]], format="csc")
    lu = spla.splu(M, permc_spec="MMD_AT_PLUS_A")

    def solve(b):
        b = np.asarray(b, dtype=float)
        if b.ndim == 1:
            x = lu.solve(np.append(b, 0.0))[:n]
        else:
            x = lu.solve(np.vstack([b, np.zeros((1, b.shape[1]))]))[:n]
        return x

    return solve


def apply_jacobian(mesh: Mesh, lam: float, rho, x) -> np.ndarray:
    v = mesh.weights * rho
    return mesh.stiffness @ x - lam * (v * x - v * (v @ x))


@dataclass
class MeanFieldState:
    mesh: Mesh = field(repr=False)
    lam: float
    psi: np.ndarray = field(repr=False)
    rho: np.ndarray = field(repr=False)
    mass_eu: float
    residual_norm: float
    newton_iters: int = 0

    @property
    def u(self) -> np.ndarray:
        return self.lam * self.psi

    def mean(self, f) -> float:
        """Density average ``<f>``."""
        return float(self.mesh.weights @ (self.rho * f))

    def centered(self, f) -> np.ndarray:
        return f - self.mean(f)

    @functools.cached_property
    def jacobian(self) -> Callable[[np.ndarray], np.ndarray]:
        return jacobian_solver(self.mesh, self.lam, self.rho)

    def solve_jacobian(self, b) -> np.ndarray:
        """Solve ``J x = b`` with one step of iterative refinement."""
        x = self.jacobian(b)
        r = b - apply_jacobian(self.mesh, self.lam, self.rho, x)
        return x + self.jacobian(r)


@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-10
    max_iter: int = 40
    max_halvings: int = 30


def _residual(mesh, lam, psi):
    rho, log_mass = _density(mesh, lam, psi)
    F = mesh.stiffness @ psi - mesh.weights * rho
    # fixed-point residual |psi - G[rho]| / |psi|; the strong residual A psi - rho
    # has a roundoff floor growing like the condition number of A
    r = norm(mesh, mesh.stiffness_solver(F)) / max(norm(mesh, psi), 1e-300)
    return F, rho, log_mass, r


def newton_solve(mesh: Mesh, lam: float, psi_init=None, cfg: Optional[NewtonConfig] = None) -> MeanFieldState:
    """Solve the mean field equation at ``lam`` by damped Newton iteration."""
    cfg = cfg or NewtonConfig()
    lam = float(lam)
    if not lam < EIGHT_PI:
        raise LambdaOutOfRange(f"lambda={lam!r} must be < 8*pi")
    if lam == 0.0:
        psi = solve_dirichlet(mesh, np.full(mesh.size, 1.0 / mesh.area))
        rho, log_mass = _density(mesh, 0.0, psi)
        _, _, _, r = _residual(mesh, 0.0, psi)
        return MeanFieldState(mesh, 0.0, psi, rho, math.exp(log_mass), r, 0)

    psi = np.zeros(mesh.size) if psi_init is None else mesh.check(psi_init, "psi_init").copy()
    F, rho, log_mass, r = _residual(mesh, lam, psi)
    for it in range(1, cfg.max_iter + 1):
        if r <= cfg.tol:
            return MeanFieldState(mesh, lam, psi, rho, math.exp(log_mass), r, it - 1)
        delta = jacobian_solver(mesh, lam, rho)(-F)
        step = 1.0
        for _ in range(cfg.max_halvings):
            trial = psi + step * delta
            try:
                tF, trho, tlog, tr = _residual(mesh, lam, trial)
            except (ValueError, OverflowError, FloatingPointError):
                tr = math.inf
            if tr < r or (tr <= 2 * cfg.tol):
                break
            step *= 0.5
        else:
            raise NonConvergence(it, r)
        psi, F, rho, log_mass, r = trial, tF, trho, tlog, tr
        if not math.isfinite(r):
            raise NonConvergence(it, r)
    if r <= cfg.tol:
        return MeanFieldState(mesh, lam, psi, rho, math.exp(log_mass), r, cfg.max_iter)
    raise NonConvergence(cfg.max_iter, r)


def solve_eta(mesh: Mesh, state: MeanFieldState) -> np.ndarray:
    """``d psi / d lam``: solves ``J eta = W rho psi_0``."""
    v = mesh.weights * state.rho
    return state.solve_jacobian(v * state.centered(state.psi))


@dataclass
class ContinuationConfig:
    lambda_start: float = 0.0
    lambda_end: float = EIGHT_PI - 0.1
    step: float = 0.2
    min_step: float = 1e-5
    max_step: float = 0.25
    newton_tol: float = 1e-10
    max_newton: int = 40
    e_max: float = 10.0
    ceiling_guard: float = 1e-3
    # relative predictor-corrector distance above which a step is retried smaller
    predictor_tol: float = 2e-4

    def __post_init__(self):
        if self.lambda_end > EIGHT_PI - self.ceiling_guard:
            raise LambdaOutOfRange(
                f"lambda_end={self.lambda_end!r} exceeds 8*pi - {self.ceiling_guard}"
            )
        if self.lambda_start > self.lambda_end:
            raise ValueError("lambda_start must not exceed lambda_end")
        if not (self.min_step > 0 and self.step >= self.min_step and self.max_step >= self.min_step):
            raise ValueError("steps must satisfy 0 < min_step <= step, max_step")
        if not (self.newton_tol > 0 and self.max_newton > 0 and self.predictor_tol > 0):
            raise ValueError("tolerances must be positive")

    @property
    def newton(self) -> NewtonConfig:
        return NewtonConfig(tol=self.newton_tol, max_iter=self.max_newton)


@dataclass
class Branch:
    mesh: Mesh = field(repr=False)
    points: list = field(default_factory=list)
    states: List[MeanFieldState] = field(default_factory=list, repr=False)
    stop_reason: str = ""

    def __len__(self):
        return len(self.points)

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([s.lam for s in self.states])

    def column(self, name) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.points], dtype=float)

    def truncated(self, lam_max: float) -> "Branch":
        keep = [i for i, s in enumerate(self.states) if s.lam <= lam_max]
        return Branch(self.mesh, [self.points[i] for i in keep], [self.states[i] for i in keep], "truncated")


def _near_fold(history, lam, window):
    """True when ``(dE/dlam)^-2`` extrapolates to zero within ``window`` of ``lam``.

    Near a fold of the discrete branch ``dE/dlam`` grows like
    ``(lam_f - lam)^(-1/2)``, so its inverse square vanishes linearly.
    """
    if len(history) < 3:
        return False
    lams = np.array([h[0] for h in history[-3:]])
    q = np.array([h[1] ** -2 for h in history[-3:]])
    if not np.all(np.diff(q) < 0):
        return False
    slope, icept = np.polyfit(lams, q, 1)
    lam_f = -icept / slope
    return 0.0 <= lam_f - lam <= window


def _march(mesh, cfg, start_state, target, postprocess, direction):
    """Continue from ``start_state`` toward ``target``; returns (states, points, reason)."""
    states, points = [], []
    state = start_state
    eta = solve_eta(mesh, state)
    history = [(state.lam, state.mean(eta))]
    h = cfg.step
    reason = "lambda_end"
    while (target - state.lam) * direction > 1e-14:
        h = min(h, cfg.max_step, abs(target - state.lam))
        lam = state.lam + direction * h
        if abs(target - lam) < cfg.min_step:
            lam = target
        pred = state.psi + (lam - state.lam) * eta
        try:
            new = newton_solve(mesh, lam, pred, cfg.newton)
            dist = norm(mesh, new.psi - pred) / max(norm(mesh, new.psi), 1e-300)
            ok = dist <= cfg.predictor_tol
        except NonConvergence:
            ok, new = False, None
        if not ok:
            h *= 0.5
            if h < cfg.min_step:
                if direction > 0 and _near_fold(history, state.lam, 100 * cfg.min_step):
                    log.warning("discrete branch folds near lambda=%.8g; stopping there", state.lam)
                    reason = "discrete_fold"
                    break
                raise StepUnderflow(state.lam, (states, points))
            continue
        state = new
        eta = solve_eta(mesh, state)
        history.append((state.lam, state.mean(eta)))
        point = postprocess(mesh, state)
        states.append(state)
        points.append(point)
        if new.newton_iters <= 4 and dist <= cfg.predictor_tol / 4:
            h = min(1.5 * h, cfg.max_step)
        if direction > 0 and point.E > cfg.e_max:
            reason = "energy_cap"
            break
    return states, points, reason


def continue_branch(mesh: Mesh, cfg: ContinuationConfig, postprocess=None) -> Branch:
    """Trace the solution branch over ``[cfg.lambda_start, cfg.lambda_end]``.

    Starts from the exact ``lam = 0`` solution, marches down to
    ``lambda_start`` when it is negative, then up to ``lambda_end``.  The
    returned branch is sorted by increasing ``lam``.

    ``stop_reason`` is ``"lambda_end"``, ``"energy_cap"`` (E exceeded
    ``cfg.e_max``) or ``"discrete_fold"``: on a mesh too coarse for the
    concentrating solution the discrete branch turns back in ``lam`` below
    ``8 pi``, and the march stops at the turning point.
    """
    if postprocess is None:
        from .diagnostics import branch_point as postprocess

    origin = newton_solve(mesh, 0.0)
    origin_point = postprocess(mesh, origin)
    below_states, below_points = [], []
    if cfg.lambda_start < 0:
        try:
            below_states, below_points, _ = _march(mesh, cfg, origin, cfg.lambda_start, postprocess, -1)
        except StepUnderflow as exc:
            s, p = exc.branch
            exc.branch = Branch(mesh, p[::-1] + [origin_point], s[::-1] + [origin], "step_underflow")
            raise
    states = below_states[::-1] + [origin]
    points = below_points[::-1] + [origin_point]
    reason = "lambda_end"
    if cfg.lambda_end > 0:
        try:
            up_states, up_points, reason = _march(mesh, cfg, origin, cfg.lambda_end, postprocess, +1)
        except StepUnderflow as exc:
            s, p = exc.branch
            exc.branch = Branch(mesh, points + p, states + s, "step_underflow")
            raise
        states += up_states
        points += up_points
    if cfg.lambda_start > 0:
        keep = [i for i, s in enumerate(states) if s.lam >= cfg.lambda_start - 1e-12]
        states = [states[i] for i in keep]
        points = [points[i] for i in keep]
    log.info("branch: %d points, lambda in [%.4g, %.4g], stop=%s", len(states), states[0].lam, states[-1].lam, reason)
    return Branch(mesh, points, states, reason)
