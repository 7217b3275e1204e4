"""
Exact dynamic programming: Bellman solves, moments, the performance-difference
identity, the surrogate bounds and exact derivatives of eta
"""
import numpy as np
import pytest

from vola import exact_dp
from vola.envs.tabular import build_random_tabular, deterministic_table
from vola.errors import UnsupportedConfiguration, ValidationError
from vola.gradients import finite_diff_grad
from vola.policy import gaussian_policy, softmax_policy

from .conftest import random_table


def test_value_matches_iteration(small_mdp, rng):
    table = random_table(rng, small_mdp.n_states, small_mdp.n_actions)
    p_pi = exact_dp.transition_under(small_mdp, table)
    r_pi = np.sum(table * small_mdp.reward, axis=1)
    v = np.zeros(small_mdp.n_states)
    for _ in range(2000):
        v = r_pi + small_mdp.gamma * p_pi @ v
    np.testing.assert_allclose(exact_dp.solve_v(small_mdp, table), v, atol=1e-10)
    q = exact_dp.solve_q(small_mdp, table)
    np.testing.assert_allclose(np.sum(table * q, axis=1), v, atol=1e-10)


def test_volatility_is_second_moment_minus_squared_mean(corpus, rng):
    for mdp in corpus:
        table = random_table(rng, mdp.n_states, mdp.n_actions)
        stats = exact_dp.perf_stats(mdp, table, lam=0.3)
        assert stats.nu2 == pytest.approx(stats.m2 - stats.j ** 2, abs=1e-10)
        assert stats.eta == pytest.approx(stats.j - 0.3 * stats.nu2)
        assert stats.j == pytest.approx(exact_dp.expected_return(mdp, table), abs=1e-12)


def test_return_variance_bounds_volatility(corpus, rng):
    for mdp in corpus:
        stats = exact_dp.perf_stats(mdp, random_table(rng, mdp.n_states, mdp.n_actions))
        assert stats.sigma2 <= stats.nu2 / (1.0 - mdp.gamma) ** 2 + 1e-10


def test_long_horizon_truncation_recovers_infinite_horizon(small_mdp, rng):
    table = random_table(rng, small_mdp.n_states, small_mdp.n_actions)
    full = exact_dp.perf_stats(small_mdp, table)
    truncated = exact_dp.truncated_stats(small_mdp, table, horizon=600)
    assert truncated.j == pytest.approx(full.j, abs=1e-10)
    assert truncated.nu2 == pytest.approx(full.nu2, abs=1e-10)
    assert truncated.sigma2 == pytest.approx(full.sigma2, rel=1e-8, abs=1e-10)


def test_one_step_truncation_is_the_immediate_reward(small_mdp, rng):
    table = random_table(rng, small_mdp.n_states, small_mdp.n_actions)
    stats = exact_dp.truncated_stats(small_mdp, table, horizon=1)
    r_pi = np.sum(table * small_mdp.reward, axis=1)
    assert stats.j == pytest.approx(small_mdp.mu @ r_pi)


def test_performance_difference_identity(corpus, rng):
    for mdp in corpus:
        for lam in (0.0, 0.5, 5.0):
            old = random_table(rng, mdp.n_states, mdp.n_actions)
            new = random_table(rng, mdp.n_states, mdp.n_actions)
            lhs, rhs = exact_dp.perf_difference(mdp, old, new, lam)
            assert lhs == pytest.approx(rhs, abs=1e-9 * max(1.0, abs(lhs)))
            gain, approx = exact_dp.delta_eta_approx(mdp, old, new, lam)
            assert gain >= approx - 1e-10


def test_surrogate_lower_bounds(corpus, rng):
    for mdp in corpus:
        old = random_table(rng, mdp.n_states, mdp.n_actions)
        new = 0.8 * old + 0.2 * random_table(rng, mdp.n_states, mdp.n_actions)
        for lam in (0.0, 1.0):
            eta_new = exact_dp.perf_stats(mdp, new, lam).eta
            bound = exact_dp.surrogate_and_bound(mdp, old, new, lam)
            assert eta_new >= bound.bound_rhs_max - 1e-10
            assert eta_new >= bound.bound_rhs_tv - 1e-10
            assert bound.epsilon <= bound.epsilon_max + 1e-12


def test_surrogate_is_exact_at_the_current_policy(small_mdp, rng):
    table = random_table(rng, small_mdp.n_states, small_mdp.n_actions)
    bound = exact_dp.surrogate_and_bound(small_mdp, table, table, 0.7)
    assert bound.l_lambda == pytest.approx(exact_dp.perf_stats(small_mdp, table, 0.7).eta, abs=1e-12)
    assert bound.kl_max == pytest.approx(0.0, abs=1e-15)


def test_recursion_closed_form(small_mdp, rng):
    table = random_table(rng, small_mdp.n_states, small_mdp.n_actions)
    f, closed = exact_dp.solve_recursion(small_mdp, table, rng.standard_normal(small_mdp.n_states))
    np.testing.assert_allclose(f, closed, atol=1e-10)


def test_occupancy_is_a_distribution(small_mdp, rng):
    table = random_table(rng, small_mdp.n_states, small_mdp.n_actions)
    occ = exact_dp.occupancy(small_mdp, table, t_max=3)
    assert occ.d_mu.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(occ.d_cond.sum(axis=1), 1.0)
    p_pi = exact_dp.transition_under(small_mdp, table)
    np.testing.assert_allclose(occ.t_step[3], p_pi @ p_pi @ p_pi)


def test_volatility_tables_are_consistent(small_mdp, rng):
    table = random_table(rng, small_mdp.n_states, small_mdp.n_actions)
    tables = exact_dp.value_tables(small_mdp, table, 0.4)
    stats = exact_dp.perf_stats(small_mdp, table)
    assert (1.0 - small_mdp.gamma) * small_mdp.mu @ tables.w == pytest.approx(stats.nu2, abs=1e-10)
    np.testing.assert_allclose(tables.x, exact_dp.solve_x(small_mdp, table, tables.j))
    np.testing.assert_allclose(np.sum(table * tables.advantage, axis=1), 0.0, atol=1e-10)


@pytest.mark.parametrize("lam", [0.0, 0.5, 3.0])
def test_exact_gradient_matches_finite_differences(lam):
    mdp = build_random_tabular(21, 4, 3, 0.8, 1.0)
    policy = softmax_policy(3, 4, np.random.default_rng(1).standard_normal(12))
    grad = exact_dp.exact_gradient_eta(mdp, policy, lam)
    fd = finite_diff_grad(lambda th: exact_dp.perf_stats(mdp, policy.with_theta(th), lam).eta, policy.theta, 1e-6)
    np.testing.assert_allclose(grad, fd, atol=1e-7)


@pytest.mark.parametrize("lam", [0.0, 2.0])
def test_analytic_hessian_matches_finite_differences(lam):
    mdp = build_random_tabular(4, 3, 2, 0.7, 1.0)
    policy = softmax_policy(2, 3, np.random.default_rng(2).standard_normal(6))
    analytic = exact_dp.hessian_eta(mdp, policy, lam)
    numeric = exact_dp.hessian_eta(mdp, policy, lam, method="fd")
    np.testing.assert_allclose(analytic, analytic.T)
    np.testing.assert_allclose(analytic, numeric, atol=1e-6)


@pytest.mark.parametrize("lam", [0.0, 1.0])
def test_truncated_gradient_is_the_gradient_of_truncated_eta(small_mdp, rng, lam):
    policy = softmax_policy(small_mdp.n_actions, small_mdp.n_states, rng.standard_normal(12))
    horizon = 6
    grad = exact_dp.truncated_gradient(small_mdp, policy, lam, horizon, normalize_return=True)
    fd = finite_diff_grad(lambda th: exact_dp.truncated_stats(small_mdp, policy.with_theta(th), horizon, lam).eta,
                          policy.theta, 1e-6)
    np.testing.assert_allclose(grad, fd, atol=1e-7)


def test_exact_gradient_needs_a_tabular_softmax(small_mdp):
    with pytest.raises(UnsupportedConfiguration):
        exact_dp.exact_gradient_eta(small_mdp, gaussian_policy(3, 4, 1.0), 0.0)
    with pytest.raises(UnsupportedConfiguration):
        exact_dp.exact_gradient_eta(small_mdp, softmax_policy(3, 2), 0.0)


def test_policy_tables_are_validated(small_mdp):
    with pytest.raises(ValidationError):
        exact_dp.perf_stats(small_mdp, np.ones((4, 3)))
    with pytest.raises(ValidationError):
        exact_dp.perf_stats(small_mdp, deterministic_table(3, 3, 0))
