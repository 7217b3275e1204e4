import logging
from dataclasses import dataclass, field
from typing import Dict

import numpy as np
import pandas as pd

from ..errors import ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PriceSeries:
    """Ordered positive prices with their provenance"""
    prices: np.ndarray
    source: str = "csv"
    meta: Dict = field(default_factory=dict)

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float)
        object.__setattr__(self, "prices", prices)
        if prices.ndim != 1 or prices.size == 0:
            raise ValidationError("a price series must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(prices)) or np.any(prices <= 0):
            bad = int(np.argmax(~np.isfinite(prices) | (prices <= 0)))
            raise ValidationError(f"price #{bad + 1} is not a positive number: {prices[bad]}")

    def __len__(self) -> int:
        return self.prices.size

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"price": self.prices})


def load_prices_csv(path: str) -> PriceSeries:
    """
    Read one decimal price per line (UTF-8).

    A single non-numeric first line is taken as a header; lines starting with
    '#' are metadata comments and blank lines are skipped. Errors name the
    1-based line number of the offending row.
    """
    try:
        # An unused separator keeps each physical line in one field.
        raw = pd.read_csv(path, header=None, names=["price"], sep="\x1f", dtype=str, skip_blank_lines=False,
                          encoding="utf-8", keep_default_na=False, quoting=3)
    except FileNotFoundError:
        raise ValidationError(f"price file not found: {path}") from None
    except pd.errors.ParserError as e:
        raise ValidationError(f"price file {path} must hold one value per line: {e}") from None
    except pd.errors.EmptyDataError:
        raise ValidationError(f"price file {path} is empty") from None

    prices = []
    header_seen = False
    for index, text in raw["price"].items():
        line = index + 1
        value = text.strip()
        if not value or value.startswith("#"):
            continue
        parsed = pd.to_numeric(value, errors="coerce")
        if pd.isna(parsed):
            if not prices and not header_seen:
                header_seen = True
                continue
            raise ValidationError(f"{path}, line {line}: non-numeric price {value!r}")
        if parsed <= 0:
            raise ValidationError(f"{path}, line {line}: price must be positive, got {value}")
        prices.append(float(parsed))

    if not prices:
        raise ValidationError(f"price file {path} holds no prices")
    logger.info("loaded %d prices from %s", len(prices), path)
    return PriceSeries(np.array(prices), source="csv", meta={"path": str(path)})


def gen_gbm_prices(seed: int, n: int, drift: float, vol: float, p0: float) -> PriceSeries:
    """Geometric Brownian motion: p_{t+1} = p_t exp((drift - vol^2/2) + vol z_t)"""
    if n < 2:
        raise ValidationError(f"a generated series needs n >= 2, got {n}")
    if not p0 > 0:
        raise ValidationError(f"p0 must be positive, got {p0}")
    if vol < 0:
        raise ValidationError(f"vol must be non-negative, got {vol}")

    rng = np.random.default_rng(seed)
    z = rng.standard_normal(n - 1)
    log_steps = (drift - 0.5 * vol ** 2) + vol * z
    prices = p0 * np.exp(np.concatenate(([0.0], np.cumsum(log_steps))))
    return PriceSeries(prices, source="synthetic",
                       meta={"seed": seed, "drift": drift, "vol": vol, "p0": p0})
