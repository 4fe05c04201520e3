"""Exception hierarchy shared by all modules."""


class DoaError(Exception):
    """Base class for every error raised by this package."""

    category = "error"


class DomainError(DoaError, ValueError):
    """An argument lies outside the domain of an operation."""

    category = "domain"


class DegenerateGainError(DomainError):
    """A gain (or model response) is too close to zero to divide by."""

    category = "degenerate"


class IllConditionedError(DoaError, ArithmeticError):
    category = "ill_conditioned"


class NumericalFailure(DoaError, ArithmeticError):
    category = "numerical"


class ConfigError(DoaError, ValueError):
    """Invalid experiment configuration."""

    category = "config"


class StageError(DoaError):
    """Wraps an error raised inside one pipeline stage."""

    category = "stage"

    def __init__(self, stage, cause):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
