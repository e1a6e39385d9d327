"""Discrete domains, the Dirichlet Laplacian and quadrature.

Both mesh kinds are cell-centered: unknowns sit at cell centers and the
zero Dirichlet condition is imposed on the outer cell faces through a
reflected ghost value.  The assembled ``stiffness`` matrix is the weighted
form ``K = W A`` where ``A`` is the pointwise discrete ``-Laplacian`` and
``W`` the diagonal of quadrature weights, so ``K`` is symmetric and
``f @ K @ g`` is the discrete Dirichlet form.

Fields are plain 1-D numpy arrays with one entry per interior node.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidMeshSpec, MeshMismatch

MIN_NODES = 16


@dataclass(frozen=True)
class DiskRadial:
    """Unit disk, angular Fourier mode ``mode`` (profile ``f(r) cos(n theta)``)."""

    mode: int = 0
    n_r: int = 512

    def __post_init__(self):
        if int(self.mode) != self.mode or self.mode < 0:
            raise InvalidMeshSpec(f"angular mode must be a nonnegative integer, got {self.mode!r}")
        if int(self.n_r) != self.n_r or self.n_r < MIN_NODES:
            raise InvalidMeshSpec(f"n_r must be an integer >= {MIN_NODES}, got {self.n_r!r}")

    @property
    def area(self) -> float:
        return float(np.pi)


@dataclass(frozen=True)
class Rectangle:
    """Rectangle ``(0, a) x (0, b)`` with ``a <= b``."""

    a: float = 1.0
    b: float = 1.0
    n_x: int = 64
    n_y: int = 64

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise InvalidMeshSpec(f"side lengths must be positive, got a={self.a!r}, b={self.b!r}")
        if self.a > self.b:
            raise InvalidMeshSpec(f"canonical orientation requires a <= b, got a={self.a}, b={self.b}")
        for name in ("n_x", "n_y"):
            n = getattr(self, name)
            if int(n) != n or n < MIN_NODES:
                raise InvalidMeshSpec(f"{name} must be an integer >= {MIN_NODES}, got {n!r}")

    @property
    def area(self) -> float:
        return float(self.a * self.b)


MeshSpec = Union[DiskRadial, Rectangle]


@dataclass(frozen=True, eq=False)
class Mesh:
    spec: MeshSpec
    coords: np.ndarray  # (n,) radii for the disk, (n, 2) points for rectangles
    weights: np.ndarray
    stiffness: sp.csc_matrix = field(repr=False)

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def area(self) -> float:
        return self.spec.area

    @property
    def is_disk(self) -> bool:
        return isinstance(self.spec, DiskRadial)

    @property
    def mode(self) -> int:
        return self.spec.mode if self.is_disk else 0

    @property
    def h(self) -> float:
        """Characteristic mesh width."""
        if self.is_disk:
            return 1.0 / self.spec.n_r
        return max(self.spec.a / self.spec.n_x, self.spec.b / self.spec.n_y)

    @functools.cached_property
    def stiffness_solver(self) -> Callable[[np.ndarray], np.ndarray]:
        """Solve ``K x = b`` (``b`` may be 1-D or 2-D)."""
        if self.is_disk:
            ab = _upper_band(self.stiffness)
            cb = sla.cholesky_banded(ab, lower=False)
            return lambda b: sla.cho_solve_banded((cb, False), b)
        lu = spla.splu(self.stiffness, permc_spec="MMD_AT_PLUS_A")
        return lu.solve

    def check(self, f, name="field") -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.size,):
            raise MeshMismatch(f"{name} has shape {f.shape}, mesh has {self.size} interior nodes")
        return f

    def companion(self, mode: int) -> "Mesh":
        """Disk mesh with the same radial nodes and a different angular mode."""
        if not self.is_disk:
            raise MeshMismatch("angular companions exist only for disk meshes")
        return build_mesh(DiskRadial(mode=mode, n_r=self.spec.n_r))

    def radial(self) -> np.ndarray:
        """Distance from the disk center (disk) or from the rectangle center."""
        if self.is_disk:
            return self.coords
        c = np.array([self.spec.a / 2, self.spec.b / 2])
        return np.hypot(*(self.coords - c).T)


def _upper_band(K: sp.spmatrix) -> np.ndarray:
    K = K.todia() if not sp.isspmatrix_dia(K) else K
    n = K.shape[0]
    ab = np.zeros((2, n))
    ab[1] = K.diagonal(0)
    ab[0, 1:] = K.diagonal(1)
    return ab


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def _disk(spec: DiskRadial) -> Mesh:
    n, h = spec.n_r, 1.0 / spec.n_r
    r = (np.arange(1, n + 1) - 0.5) * h
    faces = np.arange(0, n + 1) * h  # faces[i] is the face below cell i
    w = 2 * np.pi * r * h
    # flux coefficients r_{i+1/2}/h; outer face sees the ghost u = -u_N, i.e. distance h/2
    lower = faces[:-1] / h
    upper = faces[1:] / h
    upper_out = upper.copy()
    upper_out[-1] *= 2.0
    diag = 2 * np.pi * (lower + upper_out) + 2 * np.pi * h * spec.mode**2 / r
    off = -2 * np.pi * upper[:-1]
    K = sp.diags([off, diag, off], [-1, 0, 1], format="csc")
    return Mesh(spec, _freeze(r), _freeze(w), K)


def _second_difference(n: int, h: float) -> sp.csr_matrix:
    main = np.full(n, 2.0)
    main[[0, -1]] = 3.0
    off = -np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / h**2


def _rectangle(spec: Rectangle) -> Mesh:
    hx, hy = spec.a / spec.n_x, spec.b / spec.n_y
    x = (np.arange(spec.n_x) + 0.5) * hx
    y = (np.arange(spec.n_y) + 0.5) * hy
    X, Y = np.meshgrid(x, y)  # x varies fastest in the flattened order
    coords = np.column_stack([X.ravel(), Y.ravel()])
    A = sp.kron(sp.identity(spec.n_y), _second_difference(spec.n_x, hx)) + sp.kron(
        _second_difference(spec.n_y, hy), sp.identity(spec.n_x)
    )
    w = np.full(spec.n_x * spec.n_y, hx * hy)
    return Mesh(spec, _freeze(coords), _freeze(w), (hx * hy * A).tocsc())


@functools.lru_cache(maxsize=64)
def build_mesh(spec: MeshSpec) -> Mesh:
    """Assemble the mesh, weights and stiffness matrix for ``spec``."""
    if isinstance(spec, DiskRadial):
        return _disk(spec)
    if isinstance(spec, Rectangle):
        return _rectangle(spec)
    raise InvalidMeshSpec(f"unknown mesh spec {spec!r}")


def apply_laplacian(mesh: Mesh, f) -> np.ndarray:
    """Pointwise discrete ``-Laplacian`` of ``f`` with zero Dirichlet data."""
    f = mesh.check(f)
    return (mesh.stiffness @ f) / mesh.weights


def solve_dirichlet(mesh: Mesh, rhs) -> np.ndarray:
    """Return ``f`` with ``apply_laplacian(mesh, f) == rhs`` (the discrete Green operator)."""
    rhs = mesh.check(rhs, "rhs")
    if not rhs.any():
        return np.zeros_like(rhs)
    b = mesh.weights * rhs
    f = mesh.stiffness_solver(b)
    # one step of refinement keeps the relative residual at roundoff level
    f = f + mesh.stiffness_solver(b - mesh.stiffness @ f)
    return f


def integrate(mesh: Mesh, f) -> float:
    f = mesh.check(f)
    return float(mesh.weights @ f)


def inner(mesh: Mesh, f, g) -> float:
    """Quadrature-weighted inner product."""
    return float(mesh.weights @ (mesh.check(f) * mesh.check(g)))


def norm(mesh: Mesh, f) -> float:
    f = mesh.check(f)
    return float(np.sqrt(mesh.weights @ (f * f)))
