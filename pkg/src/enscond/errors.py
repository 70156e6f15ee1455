"""Exception hierarchy shared by all modules."""


class EnscondError(Exception):
    """Base class for all package errors."""


class ValidationError(EnscondError, ValueError):
    """A spectrum or configuration violates a structural assumption."""


class OutsideCone(EnscondError, ValueError):
    """A point does not belong to the cone 0 <= v <= u <= lambda_N v."""


class WrongSector(EnscondError, ValueError):
    """An operation was requested in a sector where it does not apply."""


class DegenerateFunctional(EnscondError, ArithmeticError):
    """No generic linear functional was found for the vertex-sum volume formula."""


class NumericalDegeneracy(EnscondError, ArithmeticError):
    """A polytope volume underflowed; the point is too close to the cone boundary."""


class IndexOutOfRange(EnscondError, IndexError):
    """A mode or pair index is outside its admissible range."""


class InsufficientEffectiveSamples(EnscondError, RuntimeError):
    """The kernel-weighted sample size is too small for a reliable estimate."""


class UnequalDelta(EnscondError, ValueError):
    """An operation requiring a common forcing perturbation got unequal values."""


class NotPositiveDefinite(EnscondError, ArithmeticError):
    """The diffusion matrix failed a positivity check at an interior point."""


class InfeasibleLyapunov(EnscondError, RuntimeError):
    """No admissible compact set was found for the drift condition."""


class DriftViolation(EnscondError, AssertionError):
    """The Lyapunov drift condition failed at a grid point."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class StepRejectedTooOften(EnscondError, RuntimeError):
    """The boundary safeguard fired on too many simulation steps."""
