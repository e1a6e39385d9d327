"""Exception types raised by the solver stack."""


class GelfandError(Exception):
    """Base class for all errors raised by this package."""


class InvalidMeshSpec(GelfandError, ValueError):
    pass


class MeshMismatch(GelfandError, ValueError):
    pass


class LambdaOutOfRange(GelfandError, ValueError):
    pass


class NonConvergence(GelfandError):
    def __init__(self, iterations, residual, message=None):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            message or f"Newton did not converge after {iterations} iterations "
            f"(last residual {residual:.3e})"
        )


class StepUnderflow(GelfandError):
    """Continuation step fell below the minimum; ``branch`` holds the partial result."""

    def __init__(self, last_lambda, branch=None):
        self.last_lambda = last_lambda
        self.branch = branch
        super().__init__(f"continuation step underflow after lambda={last_lambda:.12g}")


class EigenNonConvergence(GelfandError):
    pass


class DegenerateDensity(GelfandError, ValueError):
    pass


class SingularSystem(GelfandError):
    pass


class NoSignChange(GelfandError):
    pass


class NonMonotoneEnergy(GelfandError):
    pass


class EnergyInconsistency(GelfandError):
    pass
