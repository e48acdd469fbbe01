from .errors import ConfigError, NumericError, VolatilityError

from .linalg import CovMatrix
from .timeseries import PriceColumns, PriceSeries, ReturnSeries, SplitSpec

from .classic_bekk import BekkFitResult, BekkParams
from .classic_garch import EgarchParams, FitResult, GarchParams

__all__ = [
    "BekkFitResult",
    "BekkParams",
    "ConfigError",
    "CovMatrix",
    "EgarchParams",
    "FitResult",
    "GarchParams",
    "NumericError",
    "PriceColumns",
    "PriceSeries",
    "ReturnSeries",
    "SplitSpec",
    "VolatilityError",
]
