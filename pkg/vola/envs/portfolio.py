import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from .base import Environment, StepResult

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PortfolioConfig:
    """Liquid / non-liquid allocation problem (defaults follow the published experiment table)"""
    horizon: int = 50
    r_l: float = 1.001
    maturity: int = 4
    r_nl_high: float = 2.0
    r_nl_low: float = 1.1
    max_order: int = 10
    p_risk: float = 0.05
    p_switch: float = 0.1
    alpha: float = 0.02
    initial_liquid: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.p_risk <= 1.0 and 0.0 <= self.p_switch <= 1.0):
            raise ValidationError("p_risk and p_switch must lie in [0, 1]")
        if self.max_order < 1 or self.maturity < 1 or self.horizon < 1:
            raise ValidationError("max_order, maturity and horizon must be >= 1")
        if not self.r_l > 0:
            raise ValidationError(f"r_l must be positive, got {self.r_l}")
        if self.alpha < 0 or self.initial_liquid <= 0:
            raise ValidationError("alpha must be >= 0 and initial_liquid > 0")
        if self.r_nl_low <= 0 or self.r_nl_high <= 0:
            raise ValidationError("non-liquid rates must be positive")


class PortfolioEnv(Environment):
    """
    State x in R^{N+2}: liquid holdings, the non-liquid book by time to maturity
    (book values at cost) and the current non-liquid rate minus the mean of past rates.

    Each step buys `action` units at cost alpha each, clamped to what the liquid
    balance affords. A block bought now matures after N steps and pays its cost
    times the rate locked at purchase, unless it defaults (probability p_risk),
    in which case it pays nothing. Liquid holdings grow by r_l per step. The reward
    is the one-step change in liquid holdings.
    """

    def __init__(self, config: PortfolioConfig = PortfolioConfig(), seed: int = 0):
        self.config = config
        self.action_count = config.max_order + 1
        self.feature_dim = config.maturity + 2
        self.horizon = config.horizon
        self.r_max = self._reward_bound(config)
        super().__init__(seed)
        self._book = np.zeros(config.maturity)
        self._locked_rate = np.zeros(config.maturity)
        self._liquid = config.initial_liquid
        self._rate = config.r_nl_low
        self._rate_history: list[float] = []

    @staticmethod
    def _reward_bound(c: PortfolioConfig) -> float:
        """Crude bound on |liquid change| over any feasible episode"""
        max_payout = c.max_order * c.alpha * max(c.r_nl_high, c.r_nl_low)
        liquid_cap = (c.initial_liquid + c.horizon * max_payout) * max(c.r_l, 1.0) ** c.horizon
        return float(c.max_order * c.alpha + max_payout + abs(c.r_l - 1.0) * liquid_cap)

    def _features(self) -> np.ndarray:
        past = np.mean(self._rate_history) if self._rate_history else self._rate
        return np.concatenate(([self._liquid], self._book, [self._rate - past]))

    def book_value(self) -> float:
        return float(self._liquid + self._book.sum())

    def _reset(self, rng: np.random.Generator) -> np.ndarray:
        c = self.config
        self._book = np.zeros(c.maturity)
        self._locked_rate = np.zeros(c.maturity)
        self._liquid = c.initial_liquid
        self._rate = c.r_nl_high if rng.random() < 0.5 else c.r_nl_low
        self._rate_history = []
        return self._features()

    def _step(self, action: int, rng: np.random.Generator) -> StepResult:
        c = self.config
        value_before = self.book_value()
        liquid_before = self._liquid

        units = action
        affordable = int(np.floor(self._liquid / c.alpha + 1e-12)) if c.alpha > 0 else action
        clamped = units > affordable
        if clamped:
            units = max(affordable, 0)
        cost = units * c.alpha
        liquid = self._liquid - cost

        # The block in slot 0 matures this step.
        matured_cost = self._book[0]
        defaulted = bool(matured_cost > 0 and rng.random() < c.p_risk)
        payout = 0.0 if defaulted else matured_cost * self._locked_rate[0]
        self._book = np.append(self._book[1:], cost)
        self._locked_rate = np.append(self._locked_rate[1:], self._rate)

        interest = liquid * (c.r_l - 1.0)
        self._liquid = liquid + interest + payout

        self._rate_history.append(self._rate)
        if rng.random() < c.p_switch:
            self._rate = c.r_nl_low if self._rate == c.r_nl_high else c.r_nl_high

        reward = self._liquid - liquid_before
        info = {
            "units": units,
            "clamped": clamped,
            "cost": cost,
            "interest": interest,
            "payout": payout,
            "defaulted": defaulted,
            "default_loss": matured_cost if defaulted else 0.0,
            "maturity_gain": 0.0 if defaulted else payout - matured_cost,
            "value_before": value_before,
            "value_after": self.book_value(),
        }
        return StepResult(self._features(), float(reward), False, info)


def portfolio_env(config: PortfolioConfig, seed: int) -> PortfolioEnv:
    return PortfolioEnv(config, seed)


def audit_step(info: dict, tol: float = 1e-12) -> bool:
    """Value changes only through interest, maturity gains and defaults; purchases move value from liquid to book"""
    expected = info["value_before"] + info["interest"] + info["maturity_gain"] - info["default_loss"]
    return abs(info["value_after"] - expected) <= tol * max(1.0, abs(expected))
