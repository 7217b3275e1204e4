"""
Trajectory collection, seeding and the finite-horizon estimators
"""
import dataclasses

import numpy as np
import pytest

from vola import exact_dp
from vola.artifacts import read_csv
from vola.envs.portfolio import PortfolioConfig, PortfolioEnv
from vola.envs.tabular import TabularEnv, TabularMdp
from vola.errors import ValidationError
from vola.policy import softmax_policy
from vola.sampling import (collect, collect_triple, discounted_returns, estimate_eta, estimate_j, estimate_m2,
                           estimate_sigma, estimate_volatility, export_batch_csv, single_sample_volatility,
                           triple_sample_volatility)

from .conftest import z_limit, z_scores


def test_batches_depend_only_on_the_seed(small_env, small_policy):
    a = collect(small_env, small_policy, 30, 10, 5)
    b = collect(small_env, small_policy, 30, 10, 5)
    c = collect(small_env, small_policy, 30, 10, 6)
    assert np.array_equal(a.rewards, b.rewards)
    assert np.array_equal(a.seeds, b.seeds)
    assert not np.array_equal(a.rewards, c.rewards)


def test_worker_count_does_not_change_the_batch():
    config = PortfolioConfig(horizon=15)
    env = PortfolioEnv(config)
    policy = softmax_policy(env.action_count, env.feature_dim, np.random.default_rng(0).standard_normal(
        env.action_count * env.feature_dim) * 0.1)
    serial = collect(env, policy, 13, 15, 77, gamma=0.95)
    parallel = collect(env, policy, 13, 15, 77, gamma=0.95, jobs=4)
    assert np.array_equal(serial.rewards, parallel.rewards)
    assert np.array_equal(serial.actions, parallel.actions)
    assert np.array_equal(serial.seeds, parallel.seeds)


def test_environment_without_discount_needs_explicit_gamma():
    env = PortfolioEnv(PortfolioConfig(horizon=3))
    with pytest.raises(ValidationError, match="pass gamma"):
        collect(env, softmax_policy(env.action_count, env.feature_dim), 2, 3, 0)


def test_short_episodes_are_padded(small_mdp, small_policy):
    env = TabularEnv(small_mdp, horizon=5)
    batch = collect(env, small_policy, 4, 8, 1)
    assert batch.any_padded
    assert batch.mask[:, :5].all() and not batch.mask[:, 5:].any()
    assert np.all(batch.rewards[:, 5:] == 0.0)
    assert all(tr.length == 5 and tr.padded for tr in batch.trajectories)
    unpadded = estimate_volatility(batch, 0.3, -0.2)
    shifted = batch.rewards[:, :5]
    manual = batch.normalizer * np.mean(np.sum(batch.discounts[:5] * (shifted - 0.3) * (shifted + 0.2), axis=1))
    assert unpadded == pytest.approx(manual, rel=1e-12)


def test_padded_steps_are_ignored_by_every_estimator(small_mdp, small_policy):
    batch = collect(TabularEnv(small_mdp, horizon=5), small_policy, 4, 8, 1)
    garbage = dataclasses.replace(batch, rewards=np.where(batch.mask, batch.rewards, 7.0))
    assert estimate_j(garbage) == estimate_j(batch)
    assert estimate_m2(garbage) == estimate_m2(batch)
    assert estimate_volatility(garbage, 0.1, 0.2) == estimate_volatility(batch, 0.1, 0.2)
    np.testing.assert_array_equal(discounted_returns(garbage), discounted_returns(batch))
    valid = batch.rewards[:, :5]
    assert estimate_j(garbage) == pytest.approx(batch.normalizer * np.mean(valid @ batch.discounts[:5]), rel=1e-12)


def test_j_hat_is_unbiased(small_env, small_mdp, small_policy):
    horizon = 15
    batch = collect(small_env, small_policy, 4000, horizon, 11)
    per_traj = batch.normalizer * discounted_returns(batch)
    target = exact_dp.truncated_stats(small_mdp, small_policy, horizon).j
    assert z_scores(per_traj, target) <= z_limit
    assert estimate_j(batch) == pytest.approx(np.mean(per_traj), rel=1e-12)


def test_triple_sampling_is_unbiased(small_env, small_mdp, small_policy):
    horizon = 8
    target = exact_dp.truncated_stats(small_mdp, small_policy, horizon).nu2
    estimates = []
    for rep in range(300):
        d1, d2, d3 = collect_triple(small_env, small_policy, 10, horizon, (2024, rep))
        estimates.append(triple_sample_volatility(d1, d2, d3))
    assert z_scores(estimates, target) <= z_limit


def test_single_sample_volatility_is_biased_low_for_one_trajectory(small_env, small_policy):
    batch = collect(small_env, small_policy, 1, 10, 3)
    j = estimate_j(batch)
    assert single_sample_volatility(batch) == pytest.approx(estimate_volatility(batch, j, j))
    assert estimate_eta(batch, 2.0) == pytest.approx(j - 2.0 * single_sample_volatility(batch))


def test_triple_sampling_rejects_shared_seeds(small_env, small_policy):
    batch = collect(small_env, small_policy, 5, 4, 9)
    with pytest.raises(ValidationError, match="disjoint"):
        triple_sample_volatility(batch, batch, batch)


def test_collect_triple_sizes(small_env, small_policy):
    d1, d2, d3 = collect_triple(small_env, small_policy, 5, 4, 0, sizes=(3, 4, 6))
    assert (d1.n, d2.n, d3.n) == (3, 4, 6)


def test_return_variance_is_zero_for_a_deterministic_chain():
    transition = np.array([[[0.0, 1.0]], [[1.0, 0.0]]])
    mdp = TabularMdp(transition, np.array([[1.0], [-0.5]]), 0.9, np.array([1.0, 0.0]), r_max=1.0)
    env = TabularEnv(mdp, horizon=7)
    batch = collect(env, softmax_policy(1, 2), 6, 7, 0)
    assert estimate_sigma(batch) == pytest.approx(0.0, abs=1e-24)
    with pytest.raises(ValidationError):
        estimate_sigma(collect(env, softmax_policy(1, 2), 1, 7, 0))


def test_batch_size_and_horizon_validation(small_env, small_policy):
    with pytest.raises(ValidationError):
        collect(small_env, small_policy, 0, 5, 0)
    with pytest.raises(ValidationError):
        collect(small_env, small_policy, 5, 0, 0)


def test_export_writes_valid_steps(tmp_path, small_mdp, small_policy):
    batch = collect(TabularEnv(small_mdp, horizon=3), small_policy, 4, 5, 2)
    path = export_batch_csv(batch, tmp_path / "batch.csv", {"seed": 2})
    metadata, frame = read_csv(path)
    assert metadata["seed"] == "2"
    assert metadata["version"] == "vola-rl/1"
    assert list(frame.columns) == ["traj_id", "t", "action", "reward"]
    assert len(frame) == int(batch.mask.sum()) == 12
    assert frame["t"].max() == 2
