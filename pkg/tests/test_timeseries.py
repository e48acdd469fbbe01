import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from volatility.errors import InvalidConfig, NonPositivePrice, NoOverlap, ParseError, SeriesTooShort
from volatility.timeseries import (
    PriceColumns,
    ReturnSeries,
    SplitSpec,
    demean,
    load_prices,
    split,
    split_ranges,
    to_prices,
    to_returns,
)


def _returns(total, n=1):
    dates = np.datetime64("2020-01-01") + np.arange(total)
    values = np.arange(total * n, dtype=float).reshape(total, n)
    return ReturnSeries(names=tuple(f"a{i}" for i in range(n)), dates=dates, returns=values)


def test_load_two_rows(price_writer):
    series = load_prices(price_writer("eur", [100.0, 101.0]), PriceColumns("eur"))
    assert len(series) == 2
    assert series.name == "eur"
    assert_allclose(series.prices, [100.0, 101.0])


def test_load_skips_hash_header(price_writer):
    path = price_writer("hdr", [100.0, 101.0, 102.0], header="# config_hash=abc seed=1")
    assert len(load_prices(path, PriceColumns("hdr"))) == 3


def test_load_rejects_negative_price(price_writer):
    with pytest.raises(NonPositivePrice):
        load_prices(price_writer("neg", [100.0, -1.0]), PriceColumns("neg"))


def test_load_reports_line_of_bad_price(price_writer):
    with pytest.raises(ParseError) as info:
        load_prices(price_writer("bad", ["100.0", "abc", "101.0"]), PriceColumns("bad"))
    assert info.value.line == 3


def test_load_missing_column(price_writer):
    with pytest.raises(ParseError):
        load_prices(price_writer("col", [1.0, 2.0]), PriceColumns("col", price_column="close"))


def test_load_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_prices(str(tmp_path / "absent.csv"), PriceColumns("absent"))


def test_load_custom_date_format(price_writer):
    path = price_writer("fmt", [1.0, 2.0], dates=["03/01/2020", "06/01/2020"])
    series = load_prices(path, PriceColumns("fmt", date_format="%d/%m/%Y"))
    assert str(series.dates[1]) == "2020-01-06"


def test_load_long_file(price_writer, rng):
    prices = 100.0 * np.exp(np.cumsum(0.01 * rng.standard_normal(3128)))
    assert len(load_prices(price_writer("fx", prices), PriceColumns("fx"))) == 3128


def test_flat_and_log_identity(price_writer):
    flat = load_prices(price_writer("flat", [100.0, 100.0]), PriceColumns("flat"))
    assert_allclose(to_returns([flat], 100.0).returns, [[0.0]])
    up = load_prices(price_writer("up", [100.0, 100.0 * np.exp(0.01)]), PriceColumns("up"))
    assert_allclose(to_returns([up], 100.0).returns, [[1.0]], rtol=1e-12)


def test_disjoint_dates_raise(price_writer):
    a = load_prices(price_writer("a", [1.0, 2.0], start="2020-01-01"), PriceColumns("a"))
    b = load_prices(price_writer("b", [1.0, 2.0], start="2021-01-01"), PriceColumns("b"))
    with pytest.raises(NoOverlap):
        to_returns([a, b])


def test_alignment_uses_common_dates(price_writer):
    a = load_prices(
        price_writer("a", [1.0, 2.0, 3.0, 4.0], dates=["2020-01-01", "2020-01-02", "2020-01-03", "2020-01-06"]),
        PriceColumns("a"),
    )
    b = load_prices(
        price_writer("b", [5.0, 6.0, 7.0], dates=["2020-01-01", "2020-01-03", "2020-01-06"]),
        PriceColumns("b"),
    )
    rs = to_returns([a, b], scale=1.0)
    assert rs.names == ("a", "b")
    assert len(rs) == 2
    assert_allclose(rs.returns[0], [np.log(3.0), np.log(6.0 / 5.0)])


def test_round_trip(price_writer, rng):
    prices = 50.0 * np.exp(np.cumsum(0.02 * rng.standard_normal(500)))
    series = load_prices(price_writer("rt", prices), PriceColumns("rt"))
    rebuilt = to_prices(to_returns([series]))
    assert np.max(np.abs(rebuilt[:, 0] / series.prices - 1.0)) < 1e-12


def test_split_lengths():
    assert [len(s) for s in split(_returns(100))] == [80, 10, 10]
    assert [len(s) for s in split(_returns(103))] == [82, 10, 11]
    with pytest.raises(SeriesTooShort):
        split(_returns(5))


def test_split_partitions_series():
    rs = _returns(57, n=2)
    parts = split(rs, SplitSpec(0.6, 0.2, 0.2))
    assert_array_equal(np.vstack([p.returns for p in parts]), rs.returns)
    assert [p.offset for p in parts] == [0, 34, 45]
    assert split_ranges(57, SplitSpec(0.6, 0.2, 0.2)) == [(0, 34), (34, 45), (45, 57)]


def test_split_spec_validation():
    with pytest.raises(InvalidConfig):
        SplitSpec(0.8, 0.1, 0.2)
    with pytest.raises(InvalidConfig):
        SplitSpec(1.0, 0.0, 0.0)


def test_demean_uses_training_rows():
    rs = _returns(10)
    centred = demean(rs, 4)
    assert_allclose(centred.returns[:4].mean(), 0.0)
    assert_allclose(centred.returns[-1, 0], 9.0 - 1.5)


def test_covariance_population_normalisation():
    rs = _returns(4, n=1)
    assert_allclose(rs.covariance(), [[np.var(np.arange(4.0))]])


def test_load_prices_debug_line_follows_log_level(price_writer, caplog):
    path = price_writer("dbg", [100.0, 101.0, 102.0])
    with caplog.at_level(logging.DEBUG, logger="neuralgarch"):
        load_prices(path, PriceColumns("dbg"), log_level="INFO")
        assert not any("Loaded 3 prices" in r.getMessage() for r in caplog.records)
        load_prices(path, PriceColumns("dbg"), log_level="DEBUG")
    assert any("Loaded 3 prices for 'dbg'" in r.getMessage() for r in caplog.records)
