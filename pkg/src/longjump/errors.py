"""Exception hierarchy shared by every module of the package."""


class LongJumpError(Exception):
    """Base class for all package errors."""


class InvalidParams(LongJumpError, ValueError):
    """A model parameter violates a domain invariant."""


class RateNegativity(InvalidParams):
    """Some bulk or reservoir jump rate would be negative."""


class ToleranceUnreachable(LongJumpError):
    """A tail sum cannot be bracketed to the requested relative tolerance."""


class DivergentMoment(LongJumpError):
    """The asymmetric first moment does not converge (gamma <= 1)."""


class OrderUnsupported(LongJumpError, ValueError):
    """Requested derivative order exceeds what the test function provides."""


class QuadratureFailure(LongJumpError):
    """Adaptive quadrature did not reach the requested accuracy."""

    def __init__(self, message: str, error_estimate: float = float("nan")):
        super().__init__(message)
        self.error_estimate = error_estimate


class DivergentBoundaryIntegral(LongJumpError):
    """The boundary-rate integral of G squared diverges."""


class SpaceMismatch(LongJumpError, ValueError):
    """A test function is outside the space an operation requires."""


class TooLarge(LongJumpError, ValueError):
    """The exact generator was requested for a lattice that is too big."""


class ModeMismatch(LongJumpError):
    """An operation needs data that the trajectory's recording mode lacks."""


class BadBoxSize(LongJumpError, ValueError):
    """Box length outside the admissible range."""


class GridTooCoarse(LongJumpError):
    """Snapshot spacing is too large for a trustworthy time quadrature."""


class BadDelta(LongJumpError, ValueError):
    """Ladder parameter delta outside its admissible interval."""


class RegimeMismatch(LongJumpError):
    """An experiment was configured outside the regime it requires."""


class InsufficientEnsemble(LongJumpError):
    """Standard error too large for the tolerance budget."""


class MissingSlot(LongJumpError):
    """An ensemble result slot was never filled."""
