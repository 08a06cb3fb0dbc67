"""Exception and warning types raised by the estimation pipeline."""


class GplmError(Exception):
    """Base class for all package errors."""


class DomainError(GplmError, ValueError):
    """An argument lies outside the domain of a density, score or link."""


class DegenerateVarianceError(DomainError):
    """The variance function vanishes at the requested mean."""


class PrecisionError(GplmError, ArithmeticError):
    """A truncated series could not reach the requested accuracy."""


class DegenerateObservationError(GplmError):
    """The root of the quasi-score could not be bracketed for an observation."""

    def __init__(self, y, family):
        super().__init__(f"cannot bracket quasi-score root for y={y!r} under {family!r}")
        self.y = y
        self.family = family


class EmptyWindowError(GplmError):
    """No sample point receives positive kernel weight at the query point."""

    def __init__(self, t, h):
        super().__init__(f"empty kernel window at t={t!r} with bandwidth h={h!r}")
        self.t = t
        self.h = h


class IllConditionedDerivativeError(GplmError, ArithmeticError):
    """The denominator of the implicit derivative of the local fit is ~0."""

    def __init__(self, t, index=None):
        where = f" (observation index {index})" if index is not None else ""
        super().__init__(f"ill-conditioned local-fit derivative at t={t!r}{where}")
        self.t = t
        self.index = index


class DesignError(GplmError, ValueError):
    """The covariate design cannot identify the parametric component."""


class OptimizationFailure(GplmError, ArithmeticError):
    """An optimizer returned a result that violates its own contract."""


class MonteCarloFailure(GplmError):
    """Too many replications of a simulation run failed."""


class BoundaryWarning(UserWarning):
    """A minimizer was found on the edge of its search region."""


class NearSingularWarning(UserWarning):
    """A matrix that must be inverted is close to singular."""


class SingularMatrixError(GplmError, ArithmeticError):
    """A matrix that must be inverted is singular."""


class BandwidthError(GplmError):
    """No candidate bandwidth could be evaluated."""
