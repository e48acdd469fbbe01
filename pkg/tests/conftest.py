import numpy as np
import pandas as pd
import pytest

from volatility.classic_garch import GarchParams, simulate_garch


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def garch_returns():
    """1000 returns from GARCH(1,1) with (0.05, 0.1, 0.85)."""
    r, _ = simulate_garch(GarchParams(0.05, 0.1, 0.85), 1000, np.random.default_rng(7))
    return r


def write_price_csv(path, prices, start="2020-01-01", dates=None, header=None):
    """Business-day price file with 'date' and 'price' columns."""
    if dates is None:
        dates = pd.bdate_range(start=start, periods=len(prices)).strftime("%Y-%m-%d")
    with open(path, "w", encoding="utf-8") as f:
        if header:
            f.write(header + "\n")
        f.write("date,price\n")
        for date, price in zip(dates, prices):
            f.write(f"{date},{price}\n")
    return str(path)


@pytest.fixture
def price_writer(tmp_path):
    def write(name, prices, **kwargs):
        return write_price_csv(tmp_path / f"{name}.csv", prices, **kwargs)

    return write
