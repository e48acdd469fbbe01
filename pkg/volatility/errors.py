"""
Exception hierarchy shared by every package of the toolkit.

ConfigError and NumericError carry the CLI exit codes (2 and 3).
"""

from typing import Optional


class VolatilityError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigError(VolatilityError):
    """Bad input data, configuration or command usage."""

    exit_code = 2


class NumericError(VolatilityError):
    """A numerical procedure failed or was handed invalid values."""

    exit_code = 3


# Data and configuration


class ParseError(ConfigError):
    def __init__(self, path: str, line: int, reason: str):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {reason}")


class NonPositivePrice(ConfigError):
    def __init__(self, date, price: float):
        self.date = date
        self.price = price
        super().__init__(f"Non-positive price {price} on {date}")


class NoOverlap(ConfigError):
    pass


class SeriesTooShort(ConfigError):
    pass


class DimensionMismatch(ConfigError):
    pass


class TooFewDatasets(ConfigError):
    pass


class TooFewPairs(ConfigError):
    pass


class AllZeroDifferences(ConfigError):
    pass


class MissingResult(ConfigError):
    def __init__(self, dataset: str, model: str):
        self.dataset = dataset
        self.model = model
        super().__init__(f"Missing result for dataset '{dataset}', model '{model}'")


class InvalidConfig(ConfigError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


# Numerics


class NotPositiveDefinite(NumericError):
    def __init__(self, index: int, what: str = "pivot"):
        self.index = index
        super().__init__(f"Matrix not positive definite ({what} {index})")


class InvalidParams(NumericError):
    pass


class NonPositiveVariance(NumericError):
    pass


class DegreesOfFreedomTooSmall(NumericError):
    def __init__(self, nu: float):
        self.nu = nu
        super().__init__(f"Degrees of freedom must exceed 2, got {nu}")


class OptimizerDiverged(NumericError):
    pass


class NonFiniteLoss(NumericError):
    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"Non-finite loss {loss} at epoch {epoch}")


class DomainError(NumericError, ValueError):
    pass


# Autodiff structure


class GraphError(VolatilityError, ValueError):
    """Operands or losses of the wrong shape reached the tape."""

    exit_code = NumericError.exit_code


class ShapeMismatch(GraphError):
    pass


class NonScalarLoss(GraphError):
    pass
