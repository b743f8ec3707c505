"""Exception types raised across the package."""


class NCPhaseError(Exception):
    """Base class for package errors."""


class StepLimitExceeded(NCPhaseError):
    """The integrator would need more steps than ``max_steps`` allows."""


class NonFiniteState(NCPhaseError):
    """Integration produced an overflow or NaN."""

    def __init__(self, time: float, message: str | None = None):
        self.time = time
        super().__init__(message or f"non-finite state encountered at t={time!r}")


class NonUniformStep(NCPhaseError):
    """A finite-difference operation received unevenly spaced samples."""


class EliminationError(NCPhaseError):
    """Momenta could not be eliminated from the Hamilton equations."""


class UndefinedEpsilon(NCPhaseError):
    """The dimensionless ratio epsilon is not defined for these parameters."""


class CaseBoundary(NCPhaseError):
    """A sub/super-critical formula was requested at the critical point."""


class DegenerateFrequency(NCPhaseError):
    """The oscillation frequency vanishes, so the closed form does not apply."""


class MaxRefinementExceeded(NCPhaseError):
    """Adaptive quadrature ran out of subdivisions before meeting tolerance."""


class NoSolutionsFound(NCPhaseError):
    """Every solver restart failed to reach the residual tolerance."""
