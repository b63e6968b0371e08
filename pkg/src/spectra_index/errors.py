"""Exception hierarchy.

Every error raised by the library derives from :class:`SpectraIndexError`.
Configuration problems derive from :class:`ConfigError`, numerical failures
from :class:`NumericalError`; the CLI maps the two families onto different
exit codes.
"""


class SpectraIndexError(Exception):
    """Base class for all library errors."""


class ConfigError(SpectraIndexError, ValueError):
    """Invalid input data (bad matrices, bad boundary data, bad schema)."""


class NumericalError(SpectraIndexError, ArithmeticError):
    """A computation failed to reach its accuracy contract."""


class InternalError(SpectraIndexError, AssertionError):
    """A proven bound was violated; indicates a bug, not bad input."""


# numerics
class InvalidMatrix(ConfigError):
    pass


class NumericalBlowup(NumericalError):
    pass


# problems
class PositivityViolation(ConfigError):
    pass


class CompatibilityViolation(ConfigError):
    pass


class NotSymplectic(ConfigError):
    pass


class AngleOutOfRange(ConfigError):
    pass


class ShapeMismatch(ConfigError):
    pass


# spectral / index
class DimensionMismatch(ConfigError):
    pass


class ResolutionExceeded(NumericalError):
    pass


class VerificationFailed(NumericalError):
    pass


class ValidatorDisagreement(NumericalError):
    pass


class NotMonotone(ConfigError):
    pass


class NoConvergence(NumericalError):
    pass


# oracles
class DomainError(ConfigError):
    pass


# nonlinear
class ContinuationStalled(NumericalError):
    pass


class NewtonDiverged(NumericalError):
    pass


class SingularJacobian(NumericalError):
    def __init__(self, message, homotopy_parameter=None):
        super().__init__(message)
        self.homotopy_parameter = homotopy_parameter


class NotStronglyConvex(NumericalError):
    pass


class LineSearchFailed(NumericalError):
    pass


class PrimalResidualLarge(NumericalError):
    pass
