"""Exception hierarchy shared across the package.

Solver-type failures (NewtonDiverged, MeshLimitExceeded, ModelDomainError,
SingularMatrixError, ContinuationFailed) all derive from SolverError so that
callers implementing retry strategies (continuation step refinement,
trust-region step rejection) can catch one base class.
"""


class SpinidError(Exception):
    """Base class for all package errors."""


class ConfigError(SpinidError):
    """Invalid configuration file, CLI argument, or input data."""


class SolverError(SpinidError):
    """Base class for recoverable numerical failures."""


class ModelDomainError(SolverError):
    """Model evaluated outside its admissible region (u floor, VFT window,
    loss of strain-rate monotonicity, or non-finite values)."""


class SingularMatrixError(SolverError):
    """Linear system singular to working tolerance.

    ``pivot_index`` is the row/column index of the offending pivot (best
    available diagnostic when the factorization aborts early).
    """

    def __init__(self, message: str, pivot_index: int | None = None):
        super().__init__(message)
        self.pivot_index = pivot_index


class NewtonDiverged(SolverError):
    """Newton iteration hit its cap or damping underflowed."""


class MeshLimitExceeded(SolverError):
    """Adaptive refinement would exceed the node budget."""


class ContinuationFailed(SolverError):
    """Continuation step size fell below its abort threshold.

    Carries the path trace accumulated so far for diagnostics.
    """

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class FitDiverged(SolverError):
    """Ansatz fit did not reach first-order optimality.

    Carries the iterate trace (list of (params, objective) pairs).
    """

    def __init__(self, message: str, iterates=None):
        super().__init__(message)
        self.iterates = iterates
