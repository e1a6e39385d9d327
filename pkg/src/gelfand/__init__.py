"""Continuation and spectral diagnostics for the mean field (Gel'fand) problem."""
from .errors import (
    DegenerateDensity,
    EigenNonConvergence,
    EnergyInconsistency,
    GelfandError,
    InvalidMeshSpec,
    LambdaOutOfRange,
    MeshMismatch,
    NoSignChange,
    NonConvergence,
    NonMonotoneEnergy,
    SingularSystem,
    StepUnderflow,
)
from .grid import DiskRadial, Mesh, Rectangle, apply_laplacian, build_mesh, integrate, solve_dirichlet
from .mfsolver import Branch, ContinuationConfig, MeanFieldState, continue_branch, density, newton_solve
from .diagnostics import (
    BranchPoint,
    VerificationReport,
    classify_domain,
    energy,
    energy_zero,
    find_lambda_star,
    mu_infty_diagram,
    verify_branch,
)
from .spectrum import bessel_zero, constrained_spectrum, nu1, sigma_hat1
from .oracles import appendix_eigenpairs, disk_e0, liouville_closed_form

__version__ = "0.1.0"
