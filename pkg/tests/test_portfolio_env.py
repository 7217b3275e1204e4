"""
Liquid / non-liquid portfolio environment: accounting, clamping and determinism
"""
import numpy as np
import pytest

from vola.envs.portfolio import PortfolioConfig, PortfolioEnv, audit_step, portfolio_env
from vola.errors import ValidationError


def run_episode(env, actions, seed):
    rng = np.random.default_rng(seed)
    env.reset(rng)
    steps = []
    for a in actions:
        steps.append(env.step(a, rng))
        if steps[-1].done:
            break
    return steps


def test_value_changes_only_through_interest_maturities_and_defaults():
    env = portfolio_env(PortfolioConfig(p_risk=0.3), seed=0)
    rng = np.random.default_rng(5)
    for episode in range(20):
        env.reset(rng)
        done = False
        while not done:
            result = env.step(int(rng.integers(0, env.action_count)), rng)
            assert audit_step(result.info)
            done = result.done


def test_state_layout():
    config = PortfolioConfig(maturity=4)
    env = PortfolioEnv(config)
    x = env.reset(np.random.default_rng(0))
    assert x.shape == (config.maturity + 2,)
    assert x[0] == config.initial_liquid
    assert np.all(x[1:-1] == 0.0)
    assert env.action_count == config.max_order + 1


def test_orders_are_clamped_to_the_liquid_balance():
    config = PortfolioConfig(initial_liquid=0.05, alpha=0.02, max_order=10)
    env = PortfolioEnv(config)
    env.reset(np.random.default_rng(0))
    result = env.step(10)
    assert result.info["clamped"]
    assert result.info["units"] == 2
    assert result.info["cost"] == pytest.approx(0.04)


def test_matured_block_pays_locked_rate_without_risk():
    config = PortfolioConfig(maturity=2, p_risk=0.0, p_switch=0.0, r_l=1.0, r_nl_high=2.0, r_nl_low=2.0)
    env = PortfolioEnv(config)
    steps = run_episode(env, [1, 0, 0], seed=0)
    assert steps[0].reward == pytest.approx(-config.alpha)
    assert steps[2].info["payout"] == pytest.approx(2.0 * config.alpha)
    assert steps[2].info["maturity_gain"] == pytest.approx(config.alpha)


def test_certain_default_loses_the_block():
    config = PortfolioConfig(maturity=1, p_risk=1.0, r_l=1.0)
    env = PortfolioEnv(config)
    steps = run_episode(env, [3, 0], seed=1)
    assert steps[1].info["defaulted"]
    assert steps[1].info["default_loss"] == pytest.approx(3 * config.alpha)
    assert steps[1].info["payout"] == 0.0


def test_episodes_are_reproducible():
    actions = [1, 2, 0, 5, 3] * 10
    first = run_episode(PortfolioEnv(), actions, seed=42)
    second = run_episode(PortfolioEnv(), actions, seed=42)
    assert [s.reward for s in first] == [s.reward for s in second]
    assert len(first) == PortfolioConfig().horizon


def test_config_validation():
    with pytest.raises(ValidationError):
        PortfolioConfig(p_risk=1.5)
    with pytest.raises(ValidationError):
        PortfolioConfig(maturity=0)
