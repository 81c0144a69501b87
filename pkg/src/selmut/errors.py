"""Exception hierarchy shared by all modules."""


class SelmutError(Exception):
    """Base class for every error raised by the package."""


class EmptyQuadrature(SelmutError):
    pass


class LengthMismatch(SelmutError, ValueError):
    pass


class HypothesisViolation(SelmutError, ValueError):
    """A kernel or growth rate breaks positivity, symmetry or boundedness."""


class AllocationFailure(SelmutError, MemoryError):
    pass


class NoConvergence(SelmutError, RuntimeError):
    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class InvalidKernel(SelmutError, ValueError):
    pass


class DivergentLimit(SelmutError):
    pass


class NegativeAtomMass(SelmutError):
    pass


class NonPositiveTheta(SelmutError):
    pass


class NotAMaximizer(SelmutError, ValueError):
    pass


class PositivityLost(SelmutError, ArithmeticError):
    pass


class NonpositiveBaseline(SelmutError, ValueError):
    pass


class DegenerateState(SelmutError):
    pass


class ZeroInitialMass(SelmutError, ValueError):
    pass


class EpsilonTooSmall(SelmutError, ValueError):
    pass


class ConfigError(SelmutError, ValueError):
    pass
