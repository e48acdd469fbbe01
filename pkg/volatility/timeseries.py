"""
Price ingestion, log returns, date alignment and chronological splits.
"""

from dataclasses import dataclass, field
from errno import ENOENT
from functools import reduce
from math import floor
from os import strerror as os_strerror
from os.path import exists as os_path_exists
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from logger import Logger
from .errors import (
    InvalidConfig,
    NonPositivePrice,
    NoOverlap,
    ParseError,
    SeriesTooShort,
)

DEFAULT_SCALE = 100.0
MIN_SPLIT_LENGTH = 10


@dataclass(frozen=True)
class PriceColumns:
    """Which CSV columns hold the date and the price of one asset."""

    name: str
    date_column: str = "date"
    price_column: str = "price"
    date_format: Optional[str] = None  # None means ISO-8601


@dataclass(frozen=True, eq=False)
class PriceSeries:
    name: str
    dates: np.ndarray  # datetime64[D], strictly increasing
    prices: np.ndarray

    def __post_init__(self):
        if len(self.dates) != len(self.prices):
            raise ValueError("dates and prices differ in length")
        if len(self.prices) < 2:
            raise SeriesTooShort(f"Price series '{self.name}' needs at least 2 rows")
        if np.any(np.diff(self.dates) <= np.timedelta64(0, "D")):
            raise ValueError(f"Dates of '{self.name}' are not strictly increasing")
        bad = np.flatnonzero(~(self.prices > 0))
        if bad.size:
            raise NonPositivePrice(self.dates[bad[0]], float(self.prices[bad[0]]))

    def __len__(self) -> int:
        return len(self.prices)


@dataclass(frozen=True, eq=False)
class ReturnSeries:
    """T x n scaled log returns on a shared date grid.

    ``offset`` is the position of row 0 within the full aligned series, so a
    split segment still knows where it sits.
    """

    names: Tuple[str, ...]
    dates: np.ndarray
    returns: np.ndarray
    scale: float = DEFAULT_SCALE
    offset: int = 0
    first_prices: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.returns.ndim != 2 or self.returns.shape[1] != len(self.names):
            raise ValueError(
                f"returns shape {self.returns.shape} does not match {len(self.names)} assets"
            )
        if len(self.dates) != self.returns.shape[0]:
            raise ValueError("dates and returns differ in length")
        if not np.all(np.isfinite(self.returns)):
            raise ValueError("returns contain missing values")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def __len__(self) -> int:
        return self.returns.shape[0]

    @property
    def n_assets(self) -> int:
        return self.returns.shape[1]

    def segment(self, start: int, stop: int) -> "ReturnSeries":
        """View of rows [start, stop) keeping track of the absolute offset."""
        return ReturnSeries(
            names=self.names,
            dates=self.dates[start:stop],
            returns=self.returns[start:stop],
            scale=self.scale,
            offset=self.offset + start,
        )

    def covariance(self) -> np.ndarray:
        """Sample covariance (n x n, population normalisation)."""
        return np.atleast_2d(np.cov(self.returns, rowvar=False, bias=True))


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.8
    val_frac: float = 0.1
    test_frac: float = 0.1

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(not 0 < f < 1 for f in fracs):
            raise InvalidConfig(f"Split fractions must lie in (0, 1), got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise InvalidConfig(f"Split fractions must sum to 1, got {sum(fracs)}")

    def lengths(self, total: int) -> Tuple[int, int, int]:
        n_train = floor(self.train_frac * total + 1e-9)
        n_val = floor(self.val_frac * total + 1e-9)
        return n_train, n_val, total - n_train - n_val


def load_prices(path: str, column_spec: PriceColumns, log_level: str = "INFO") -> PriceSeries:
    """Read one asset's prices from a headed CSV file.

    Rows whose date or price cannot be parsed are rejected with the file
    line number (the header is line 1).
    """
    logger = Logger(log_level, "timeseries")
    if not os_path_exists(path):
        raise FileNotFoundError(ENOENT, os_strerror(ENOENT), path)

    # Output files of this toolkit start with "# config_hash=..." lines.
    with open(path, "r", encoding="utf-8") as f:
        n_comment = 0
        for line in f:
            if not line.startswith("#"):
                break
            n_comment += 1
    header_line = n_comment + 1

    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True, skiprows=n_comment)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ParseError(path, header_line, str(e)) from e

    for column in (column_spec.date_column, column_spec.price_column):
        if column not in frame.columns:
            raise ParseError(path, header_line, f"missing column '{column}'")

    raw_dates = frame[column_spec.date_column].str.strip()
    raw_prices = frame[column_spec.price_column].str.strip()
    dates = pd.to_datetime(raw_dates, format=column_spec.date_format, errors="coerce")
    prices = pd.to_numeric(raw_prices, errors="coerce")

    for row in np.flatnonzero(dates.isna().to_numpy()):
        raise ParseError(path, int(row) + header_line + 1, f"unparsable date '{raw_dates.iloc[row]}'")
    for row in np.flatnonzero(prices.isna().to_numpy()):
        raise ParseError(path, int(row) + header_line + 1, f"unparsable price '{raw_prices.iloc[row]}'")

    date_values = dates.to_numpy().astype("datetime64[D]")
    price_values = prices.to_numpy(dtype=float)
    non_positive = np.flatnonzero(price_values <= 0)
    if non_positive.size:
        row = int(non_positive[0])
        raise NonPositivePrice(str(date_values[row]), float(price_values[row]))

    decreasing = np.flatnonzero(np.diff(date_values) <= np.timedelta64(0, "D"))
    if decreasing.size:
        row = int(decreasing[0]) + 1
        raise ParseError(path, row + header_line + 1, "dates are not strictly increasing")

    series = PriceSeries(column_spec.name, date_values, price_values)
    logger.debug(f"Loaded {len(series)} prices for '{series.name}' from {path}")
    return series


def to_returns(series: Sequence[PriceSeries], scale: float = DEFAULT_SCALE) -> ReturnSeries:
    """Scaled log returns on the intersection of the series' dates."""
    if not series:
        raise NoOverlap("No price series given")
    if scale <= 0:
        raise InvalidConfig(f"Return scale must be positive, got {scale}")

    common = reduce(np.intersect1d, [s.dates for s in series])
    if len(common) < 2:
        raise NoOverlap(
            f"Series {[s.name for s in series]} share only {len(common)} dates"
        )

    aligned = []
    for s in series:
        mask = np.isin(s.dates, common)
        aligned.append(s.prices[mask])
    prices = np.column_stack(aligned)

    returns = scale * np.diff(np.log(prices), axis=0)
    return ReturnSeries(
        names=tuple(s.name for s in series),
        dates=common[1:],
        returns=returns,
        scale=float(scale),
        first_prices=prices[0].copy(),
    )


def to_prices(rs: ReturnSeries, p0: Optional[np.ndarray] = None) -> np.ndarray:
    """Inverse of to_returns: (T + 1) x n price path starting at p0."""
    if p0 is None:
        p0 = rs.first_prices if rs.first_prices is not None else np.ones(rs.n_assets)
    growth = np.exp(np.cumsum(rs.returns / rs.scale, axis=0))
    return np.vstack([p0, p0 * growth])


def demean(rs: ReturnSeries, train_len: int) -> ReturnSeries:
    """Subtract the training-sample mean from every row."""
    if train_len < 1:
        raise SeriesTooShort("Demeaning needs at least one training row")
    mean = rs.returns[:train_len].mean(axis=0)
    return ReturnSeries(
        names=rs.names,
        dates=rs.dates,
        returns=rs.returns - mean,
        scale=rs.scale,
        offset=rs.offset,
        first_prices=rs.first_prices,
    )


def split(
    rs: ReturnSeries, spec: SplitSpec = SplitSpec()
) -> Tuple[ReturnSeries, ReturnSeries, ReturnSeries]:
    """Contiguous chronological train / validation / test segments."""
    total = len(rs)
    if total < MIN_SPLIT_LENGTH:
        raise SeriesTooShort(f"Need at least {MIN_SPLIT_LENGTH} returns to split, got {total}")
    n_train, n_val, _ = spec.lengths(total)
    return (
        rs.segment(0, n_train),
        rs.segment(n_train, n_train + n_val),
        rs.segment(n_train + n_val, total),
    )


def split_ranges(total: int, spec: SplitSpec = SplitSpec()) -> List[Tuple[int, int]]:
    """The [start, stop) index ranges split() would produce."""
    n_train, n_val, _ = spec.lengths(total)
    return [(0, n_train), (n_train, n_train + n_val), (n_train + n_val, total)]
