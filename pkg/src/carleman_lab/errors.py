"""Exception hierarchy shared by every module of the package."""


class CarlemanLabError(Exception):
    """Base class for all package errors."""


class DomainError(CarlemanLabError, ValueError):
    """A scalar argument lies outside the domain of an operation."""


class ConfigError(CarlemanLabError, ValueError):
    """A configuration object or partition layout is inconsistent."""


class EmptySampleSet(CarlemanLabError):
    """A symbol scan rejected every sample."""


class RootFindFailure(CarlemanLabError):
    """The characteristic equation has no root at the requested sample."""


class SupportViolation(CarlemanLabError):
    """A field is nonzero where the model requires it to vanish."""


class CausalityViolation(SupportViolation):
    """A field is nonzero at non-positive times."""


class ZeroDenominator(CarlemanLabError, ArithmeticError):
    """The right-hand side of a ratio is numerically zero."""


class OverflowGuard(CarlemanLabError, OverflowError):
    """An exponential weight would leave the double-precision range."""


class SolveFailure(CarlemanLabError):
    """A linear system of the forward solver could not be solved."""
