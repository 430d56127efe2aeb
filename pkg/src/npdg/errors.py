"""Exception types raised by the solvers and designers."""


class NpdgError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(NpdgError, ValueError):
    """Matrix or vector dimensions are inconsistent."""


class IndefiniteWeight(NpdgError, ValueError):
    """A cost weight violates its definiteness requirement."""


class NonStabilizable(NpdgError):
    """No stabilizing Riccati solution was found."""


class NoConvergence(NpdgError):
    """Iterative solver exhausted its budget.

    Carries the iteration count and the last residual so callers can
    decide whether to retry with a different initialization.
    """

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class RankDeficient(NpdgError):
    """Regression data do not span the state space."""

    def __init__(self, message, effective_rank=None):
        super().__init__(message)
        self.effective_rank = effective_rank


class Infeasible(NpdgError):
    """Identification constraints cannot all be met at the given distance."""

    def __init__(self, message, delta=None):
        super().__init__(message)
        self.delta = delta


class SolverStalled(NpdgError):
    """Feasibility iteration stopped making progress."""


class SingularPencil(NpdgError):
    """Cooperation-state matrix lost the rank needed for reconstruction."""

    def __init__(self, message, effective_rank=None):
        super().__init__(message)
        self.effective_rank = effective_rank


class InnerSolverFailed(NpdgError):
    """Nested design optimization: the inner game solve failed for a candidate."""


class LqrFailed(NpdgError):
    """Extended-system LQR design failed for a candidate weighting."""


class NoDescent(NpdgError):
    """Outer optimizer could not improve the objective within its budget."""


class MissingDesign(NpdgError):
    """A scenario requires a designed controller that was not supplied."""


class InvalidParams(NpdgError, ValueError):
    """Physical parameters are out of their admissible range."""
