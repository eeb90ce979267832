"""Exception hierarchy shared by all modules."""


class PhiLapError(Exception):
    """Base class for every error raised by this package."""


class DomainError(PhiLapError, ValueError):
    pass


class ConjugateError(PhiLapError):
    pass


class BracketError(PhiLapError):
    pass


class SingularPointError(PhiLapError, ValueError):
    pass


class QuadratureError(PhiLapError):
    pass


class ResolutionError(PhiLapError):
    pass


class EmptyRegionError(PhiLapError):
    pass


class PreconditionError(PhiLapError, ValueError):
    pass


class SpecError(PhiLapError, ValueError):
    pass


class AssumptionError(PhiLapError):
    pass


class ConfigError(PhiLapError, ValueError):
    pass


class NumericalBreakdown(PhiLapError, FloatingPointError):
    pass


class NonConvergence(PhiLapError):
    """Iteration budget exhausted. ``result`` carries the best iterate and its report."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class VerificationError(PhiLapError):
    """A machine-checked inequality was violated."""
