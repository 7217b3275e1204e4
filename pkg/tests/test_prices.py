"""
Price series loading and synthetic generation
"""
import numpy as np
import pytest

from vola.envs.prices import PriceSeries, gen_gbm_prices, load_prices_csv
from vola.errors import ValidationError


def test_load_plain_column(tmp_path):
    path = tmp_path / "prices.csv"
    path.write_text("100.5\n101\n\n99.25\n", encoding="utf-8")
    series = load_prices_csv(str(path))
    np.testing.assert_array_equal(series.prices, [100.5, 101.0, 99.25])
    assert series.source == "csv"


def test_load_skips_header_and_comment_lines(tmp_path):
    path = tmp_path / "prices.csv"
    path.write_text("# version=vola-rl/1, seed=0\nprice\n1.5\n2.5\n", encoding="utf-8")
    series = load_prices_csv(str(path))
    assert len(series) == 2
    assert list(series.to_frame().columns) == ["price"]


def test_non_numeric_row_names_its_line(tmp_path):
    path = tmp_path / "prices.csv"
    path.write_text("price\n1.0\n2.0\nabc\n", encoding="utf-8")
    with pytest.raises(ValidationError, match="line 4"):
        load_prices_csv(str(path))


def test_non_positive_price_names_its_line(tmp_path):
    path = tmp_path / "prices.csv"
    path.write_text("1.0\n-2.0\n", encoding="utf-8")
    with pytest.raises(ValidationError, match="line 2"):
        load_prices_csv(str(path))


def test_missing_and_empty_files(tmp_path):
    with pytest.raises(ValidationError):
        load_prices_csv(str(tmp_path / "nope.csv"))
    empty = tmp_path / "empty.csv"
    empty.write_text("", encoding="utf-8")
    with pytest.raises(ValidationError):
        load_prices_csv(str(empty))


def test_gbm_without_volatility_is_deterministic_drift():
    series = gen_gbm_prices(0, 5, 0.0, 0.0, 42.0)
    np.testing.assert_allclose(series.prices, 42.0)
    grown = gen_gbm_prices(0, 4, 0.1, 0.0, 1.0)
    np.testing.assert_allclose(grown.prices, np.exp(0.1 * np.arange(4)), rtol=1e-14)


def test_gbm_follows_its_log_increments():
    drift, vol = 0.01, 0.2
    series = gen_gbm_prices(17, 50, drift, vol, 3.0)
    z = np.random.default_rng(17).standard_normal(49)
    np.testing.assert_allclose(np.diff(np.log(series.prices)), drift - 0.5 * vol ** 2 + vol * z, rtol=1e-10,
                               atol=1e-12)
    assert series.meta == {"seed": 17, "drift": drift, "vol": vol, "p0": 3.0}


def test_price_series_validation():
    with pytest.raises(ValidationError):
        PriceSeries(np.array([]))
    with pytest.raises(ValidationError):
        PriceSeries(np.array([1.0, 0.0]))
    with pytest.raises(ValidationError):
        gen_gbm_prices(0, 1, 0.0, 0.1, 1.0)
