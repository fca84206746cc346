"""Exception hierarchy shared by the library and the CLI."""


class MVSDEError(Exception):
    """Base class for every error raised by :mod:`mvsde`."""


class ConfigError(MVSDEError, ValueError):
    """Invalid or incomplete configuration (unknown keys, missing params)."""


class DomainError(MVSDEError, ValueError):
    """An argument lies outside the domain of the operation."""


class DimensionError(DomainError):
    """Mismatched particle counts or state dimensions."""


class UnsupportedModelError(MVSDEError, TypeError):
    """The model lacks a capability the operation needs."""


class StepFunctionError(MVSDEError, ArithmeticError):
    """A time-step function produced a non-positive or non-finite step."""


class DivergenceError(MVSDEError, ArithmeticError):
    """A particle state became non-finite or exceeded the corruption bound."""

    def __init__(self, message, particle=None, time=None):
        super().__init__(message)
        self.particle = particle
        self.time = time
