"""Exception hierarchy shared across the toolkit.

Exit-code mapping used by the command line front end:

* :class:`ConfigError`            -> 2 (bad or inconsistent configuration)
* :class:`SolverError` subclasses -> 3 (steady solve failed)
* :class:`EigenError` subclasses  -> 4 (eigenvalue computation failed)
"""


class FlowstabError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(FlowstabError):
    """Malformed, unknown, or mutually inconsistent configuration input."""


class GeometryError(FlowstabError):
    """Mesh construction request that cannot be honoured (misaligned
    features, non-positive sizes, unknown benchmark)."""


class SolverError(FlowstabError):
    """Base class for steady-state solve failures."""


class ConvergenceError(SolverError):
    """Nonlinear iteration stopped without meeting the residual target.

    Carries the residual trace so callers can log or inspect it.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class RankDeficiencyError(SolverError):
    """Singular saddle-point system (for instance an un-pinned pressure
    nullspace when every boundary segment is Dirichlet)."""


class EigenError(FlowstabError):
    """Base class for eigensolver failures."""


class ShiftError(EigenError):
    """Factorization of the shifted pencil failed; retry with another shift."""


class PositivityError(FlowstabError):
    """A viscosity realization was not strictly positive at every
    quadrature point."""


class FieldError(FlowstabError):
    """Random-field construction failure (indefinite covariance sample,
    unreachable coefficient of variation, bad truncation order)."""


class TrainingError(FlowstabError):
    """Surrogate construction failure (degenerate design, ill-conditioned
    correlation matrix, invalid budget)."""
