from .base import Environment, StepResult
from .portfolio import PortfolioConfig, PortfolioEnv, audit_step, portfolio_env
from .prices import PriceSeries, gen_gbm_prices, load_prices_csv
from .tabular import (
    TabularEnv,
    TabularMdp,
    build_random_tabular,
    deterministic_table,
    two_cycle_mdp,
)
from .trading import POSITIONS, TradingConfig, TradingEnv, trading_env, trading_reward

__all__ = [
    "Environment",
    "StepResult",
    "PortfolioConfig",
    "PortfolioEnv",
    "audit_step",
    "portfolio_env",
    "PriceSeries",
    "gen_gbm_prices",
    "load_prices_csv",
    "TabularEnv",
    "TabularMdp",
    "build_random_tabular",
    "deterministic_table",
    "two_cycle_mdp",
    "POSITIONS",
    "TradingConfig",
    "TradingEnv",
    "trading_env",
    "trading_reward",
]
