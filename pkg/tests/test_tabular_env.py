"""
Tabular MDPs, the two-cycle example and the episodic sampler over them
"""
import numpy as np
import pytest

from vola import exact_dp
from vola.envs.tabular import TabularEnv, TabularMdp, build_random_tabular, deterministic_table, two_cycle_mdp
from vola.errors import ContractViolation, ValidationError
from vola.policy import softmax_policy
from vola.sampling import collect, rollout


def test_random_mdp_is_well_formed():
    mdp = build_random_tabular(7, 5, 3, 0.9, 2.0)
    assert mdp.transition.shape == (5, 3, 5)
    np.testing.assert_allclose(mdp.transition.sum(axis=2), 1.0, atol=1e-12)
    assert np.all(np.abs(mdp.reward) <= 2.0)
    assert mdp.name == "random-7"


def test_random_mdp_is_deterministic_in_seed():
    a = build_random_tabular(11, 4, 2, 0.5, 1.0)
    b = build_random_tabular(11, 4, 2, 0.5, 1.0)
    c = build_random_tabular(12, 4, 2, 0.5, 1.0)
    assert np.array_equal(a.transition, b.transition)
    assert np.array_equal(a.reward, b.reward)
    assert not np.array_equal(a.reward, c.reward)


@pytest.mark.parametrize("kwargs", [
    dict(seed=0, n_states=0, n_actions=2, gamma=0.9, r_max=1.0),
    dict(seed=0, n_states=3, n_actions=2, gamma=1.0, r_max=1.0),
    dict(seed=0, n_states=3, n_actions=2, gamma=0.9, r_max=0.0),
])
def test_random_mdp_rejects_bad_parameters(kwargs):
    with pytest.raises(ValidationError):
        build_random_tabular(**kwargs)


def test_mdp_rejects_rewards_above_declared_bound():
    transition = np.ones((2, 1, 2)) / 2
    with pytest.raises(ValidationError):
        TabularMdp(transition, np.array([[0.5], [1.5]]), 0.9, np.array([1.0, 0.0]), r_max=1.0)


def test_mdp_rejects_non_stochastic_rows():
    transition = np.full((2, 1, 2), 0.6)
    with pytest.raises(ValidationError):
        TabularMdp(transition, np.zeros((2, 1)), 0.9, np.array([1.0, 0.0]), r_max=1.0)


@pytest.mark.parametrize("gamma", [0.5, 0.9, 0.99])
def test_two_cycle_returns_and_volatilities(gamma):
    mdp = two_cycle_mdp(0.0, gamma)
    stay_a = exact_dp.perf_stats(mdp, deterministic_table(5, 2, 0))
    stay_b = exact_dp.perf_stats(mdp, deterministic_table(5, 2, 1))
    assert stay_a.j == pytest.approx(0.0, abs=1e-12)
    assert stay_b.j == pytest.approx(0.0, abs=1e-11)
    assert stay_a.nu2 == pytest.approx(gamma, rel=1e-10)
    assert stay_b.nu2 == pytest.approx(100.0 * gamma, rel=1e-10)
    assert stay_b.nu2 / stay_a.nu2 == pytest.approx(100.0, rel=1e-10)


def test_two_cycle_epsilon_favors_b_on_return():
    gamma, eps = 0.9, 0.2
    mdp = two_cycle_mdp(eps, gamma)
    j_a = exact_dp.expected_return(mdp, deterministic_table(5, 2, 0))
    j_b = exact_dp.expected_return(mdp, deterministic_table(5, 2, 1))
    assert j_a == pytest.approx(0.5 * eps / (1.0 + gamma), rel=1e-10)
    assert j_b == pytest.approx(eps / (1.0 + gamma), rel=1e-10)
    assert j_b > j_a


def test_two_cycle_is_deterministic_and_starts_in_s0():
    mdp = two_cycle_mdp(0.1, 0.9)
    assert np.all((mdp.transition == 0.0) | (mdp.transition == 1.0))
    assert mdp.mu[0] == 1.0
    assert mdp.r_max == 90.0


def test_step_after_done_violates_contract(small_mdp):
    env = TabularEnv(small_mdp, horizon=2)
    env.reset(np.random.default_rng(0))
    env.step(0)
    assert env.step(1).done
    with pytest.raises(ContractViolation):
        env.step(0)


@pytest.mark.parametrize("action", [-1, 3, 1.5, True, "a"])
def test_bad_action_violates_contract(small_mdp, action):
    env = TabularEnv(small_mdp, horizon=5)
    env.reset(np.random.default_rng(0))
    with pytest.raises(ContractViolation):
        env.step(action)


def test_gymnasium_spaces_match_mdp(small_env, small_mdp):
    assert small_env.action_space.n == small_mdp.n_actions
    assert small_env.observation_space.shape == (small_mdp.n_states,)
    assert small_env.is_one_hot


def test_vectorized_sampler_matches_step_by_step_rollouts(small_env, small_policy):
    horizon = 12
    seqs = np.random.SeedSequence(99).spawn(25)
    fast = collect(small_env, small_policy, 25, horizon, 99)
    for i, seq in enumerate(seqs):
        slow = rollout(small_env, small_policy, horizon, np.random.default_rng(seq))
        assert np.array_equal(slow.actions, fast.actions[i])
        assert np.array_equal(slow.rewards, fast.rewards[i])
        assert np.array_equal(slow.states, fast.features[i])


def test_supplied_features_follow_the_sampled_states(small_mdp, rng):
    features = rng.standard_normal((small_mdp.n_states, 2))
    env = TabularEnv(small_mdp, horizon=6, features=features)
    policy = softmax_policy(small_mdp.n_actions, 2, rng.standard_normal(small_mdp.n_actions * 2))
    batch = collect(env, policy, 5, 6, 3)
    assert batch.features.shape == (5, 6, 2)
    np.testing.assert_array_equal(batch.features, features[batch.state_ids])
