import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from .base import Environment, StepResult
from .prices import PriceSeries

logger = logging.getLogger(__name__)

POSITIONS = (-1, 0, 1)


@dataclass(frozen=True)
class TradingConfig:
    """Single-asset trading with proportional fees"""
    window: int = 10
    episode_len: int = 50
    fee: float = 7e-5
    normalize_prices: bool = False

    def __post_init__(self):
        if self.window < 1 or self.episode_len < 1:
            raise ValidationError("window and episode_len must be >= 1")
        if self.fee < 0:
            raise ValidationError(f"fee must be non-negative, got {self.fee}")


def trading_reward(position: int, prev_position: int, price: float, prev_price: float, fee: float) -> float:
    """R_t = a_t (p_t - p_{t-1}) - f |a_t - a_{t-1}|"""
    return position * (price - prev_price) - fee * abs(position - prev_position)


class TradingEnv(Environment):
    """
    Actions index the positions (-1, 0, +1). The state holds the last `window`
    standardized percentage price changes, the previous position and the fraction
    of the episode still to go. The position chosen at price index j earns the
    move from p_j to p_{j+1}.
    """

    def __init__(self, prices: PriceSeries, config: TradingConfig = TradingConfig(), seed: int = 0):
        needed = config.window + config.episode_len + 1
        if len(prices) < needed:
            raise ValidationError(
                f"trading needs at least window + episode_len + 1 = {needed} prices, got {len(prices)}")
        self.prices = prices.prices
        self.config = config
        self.action_count = len(POSITIONS)
        self.feature_dim = config.window + 2
        self.horizon = config.episode_len

        changes = self.prices[1:] / self.prices[:-1] - 1.0
        self._changes = changes
        self._change_mean = float(np.mean(changes))
        self._change_std = float(np.std(changes)) or 1.0
        moves = np.abs(np.diff(self.prices))
        scale = 1.0 / float(np.min(self.prices)) if config.normalize_prices else 1.0
        self.r_max = float(np.max(moves) * scale + 2.0 * config.fee)

        super().__init__(seed)
        self._start = config.window
        self._position = 0
        self._scale = 1.0

    @property
    def start_range(self) -> tuple[int, int]:
        """Inclusive range of valid episode start indices"""
        return self.config.window, len(self.prices) - 1 - self.config.episode_len

    def _features(self, t: int) -> np.ndarray:
        j = self._start + t
        recent = self._changes[j - self.config.window:j]
        standardized = (recent - self._change_mean) / self._change_std
        remaining = (self.config.episode_len - t) / self.config.episode_len
        return np.concatenate((standardized, [float(self._position), remaining]))

    def _reset(self, rng: np.random.Generator) -> np.ndarray:
        lo, hi = self.start_range
        self._start = int(rng.integers(lo, hi + 1))
        self._position = 0
        self._scale = 1.0 / self.prices[self._start] if self.config.normalize_prices else 1.0
        return self._features(0)

    def _step(self, action: int, rng: np.random.Generator) -> StepResult:
        j = self._start + self.t
        position = POSITIONS[action]
        prev_position = self._position
        reward = trading_reward(position, prev_position, self.prices[j + 1] * self._scale,
                                self.prices[j] * self._scale, self.config.fee)
        self._position = position
        info = {"price_index": j + 1, "position": position, "prev_position": prev_position, "scale": self._scale}
        return StepResult(self._features(self.t + 1), reward, False, info)


def trading_env(prices: PriceSeries, config: TradingConfig, seed: int) -> TradingEnv:
    return TradingEnv(prices, config, seed)
