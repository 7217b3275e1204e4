"""
Training configuration, the training log and the gradient / trust-region optimizers
"""
import numpy as np
import pytest
from omegaconf import OmegaConf

from vola import exact_dp
from vola.envs.tabular import TabularEnv, TabularMdp
from vola.errors import UnsupportedConfiguration, ValidationError
from vola.optimizers import (LOG_COLUMNS, TrainConfig, TrainLog, TrainRecord, check_exp_utility_approx,
                             conjugate_gradient, exp_utility_transform, mean_variance_gradient, mean_variance_pg,
                             trpo_exp, trvo, vola_pg)
from vola.policy import gaussian_policy, softmax_policy
from vola.sampling import collect


def bandit_env() -> TabularEnv:
    """One state, two arms paying 1 and 0"""
    mdp = TabularMdp(np.ones((1, 2, 1)), np.array([[1.0, 0.0]]), 0.0, np.array([1.0]), r_max=1.0, name="bandit")
    return TabularEnv(mdp, horizon=1)


def record(i: int, **extras) -> TrainRecord:
    return TrainRecord(i, 0.1, 0.2, 0.3, 0.0, 1.0, 0.0, 0.01, 0.0, extras=extras)


def test_train_config_from_composed_sections():
    cfg = OmegaConf.create({"train": {"lambda": 0.5, "iterations": 3}, "trvo": {"trust_region": "penalty"}})
    config = TrainConfig.from_cfg(cfg, seed=9)
    assert config.lam == 0.5
    assert config.iterations == 3
    assert config.trust_region == "penalty"
    assert config.seed == 9


@pytest.mark.parametrize("changes", [
    {"lam": -1.0}, {"gamma": 1.0}, {"horizon": 0}, {"iterations": -1}, {"alpha": -0.1}, {"c": 0.0},
    {"backtrack_coef": 1.0}, {"trust_region": "exact"}, {"gradient": "analytic"}, {"estimator": "reinforce"},
    {"clip_norm": 0.0},
])
def test_train_config_validation(changes):
    with pytest.raises(ValidationError):
        TrainConfig(**changes)


def test_train_config_rejects_unknown_keys():
    with pytest.raises(ValidationError, match="unknown training keys"):
        TrainConfig.from_cfg({"train": {"learning_rate": 0.1}})


def test_train_log_frame_and_flags():
    log = TrainLog("vola-pg")
    log.append(record(0))
    log.append(record(1, n_star=5))
    log.flag(1, "capped")
    frame = log.to_frame()
    assert list(frame.columns) == list(LOG_COLUMNS) + ["n_star"]
    assert np.isnan(frame.loc[0, "n_star"])
    assert log.column("n_star")[1] == 5
    assert log.flags == ["iter 1: capped"]
    with pytest.raises(ValidationError):
        log.append(record(1))


def test_vola_pg_learns_the_better_arm():
    env = bandit_env()
    policy0 = softmax_policy(2, 1)
    config = TrainConfig(horizon=1, batch_size=100, iterations=200, alpha=1.0, seed=3)
    policy, log = vola_pg(env, policy0, config)
    assert policy.probabilities(np.array([1.0]))[0] > 0.99
    assert len(log) == 200
    assert log.records[-1].j_hat > 0.95


def test_exact_vola_pg_improves_eta(small_env, small_mdp, small_policy):
    config = TrainConfig(lam=0.5, gradient="exact", iterations=30, alpha=0.02)
    policy, log = vola_pg(small_env, small_policy, config)
    before = exact_dp.perf_stats(small_mdp, small_policy, 0.5).eta
    after = exact_dp.perf_stats(small_mdp, policy, 0.5).eta
    assert after > before
    assert log.records[0].eta_hat == pytest.approx(before)


def test_training_is_reproducible(small_env, small_policy):
    config = TrainConfig(lam=0.2, horizon=10, batch_size=20, iterations=5, alpha=0.05, seed=4)
    first, log1 = vola_pg(small_env, small_policy, config)
    second, log2 = vola_pg(small_env, small_policy, config)
    assert np.array_equal(first.theta, second.theta)
    assert log1.column("eta_hat") == log2.column("eta_hat")


def test_exact_mode_needs_a_tabular_softmax(small_env):
    config = TrainConfig(gradient="exact", iterations=1)
    with pytest.raises(UnsupportedConfiguration):
        vola_pg(small_env, gaussian_policy(3, 4, 1.0), config)


def test_mean_variance_gradient_weights_summed_scores(small_env, small_policy):
    batch = collect(small_env, small_policy, 40, 5, 0)
    with_zero = mean_variance_gradient(batch, small_policy, 0.0)
    with_risk = mean_variance_gradient(batch, small_policy, 2.0)
    assert with_zero.shape == (small_policy.m,)
    assert not np.allclose(with_zero, with_risk)
    with pytest.raises(ValidationError):
        mean_variance_gradient(collect(small_env, small_policy, 1, 5, 0), small_policy, 1.0)


def test_mean_variance_pg_logs_its_objective(small_env, small_policy):
    config = TrainConfig(lam=0.3, horizon=5, batch_size=20, iterations=3, alpha=0.01)
    _, log = mean_variance_pg(small_env, small_policy, config)
    assert len(log.column("mv_objective")) == 3
    with pytest.raises(ValidationError):
        mean_variance_pg(small_env, small_policy, config.with_(batch_size=1))


def test_conjugate_gradient_solves_spd_systems(rng):
    a = rng.standard_normal((6, 6))
    spd = a @ a.T + 0.5 * np.eye(6)
    b = rng.standard_normal(6)
    x, converged = conjugate_gradient(lambda v: spd @ v, b, max_iter=50, tol=1e-20)
    assert converged
    np.testing.assert_allclose(x, np.linalg.solve(spd, b), atol=1e-8)


def test_conjugate_gradient_reports_failure():
    x, converged = conjugate_gradient(lambda v: -v, np.ones(3), max_iter=5)
    assert not converged
    np.testing.assert_array_equal(x, np.zeros(3))
    _, converged = conjugate_gradient(lambda v: v, np.zeros(3), max_iter=5)
    assert converged


def test_practical_trust_region_respects_the_kl_radius(small_env, small_policy):
    config = TrainConfig(lam=0.5, horizon=10, batch_size=50, iterations=8, kl_radius=0.01, seed=2)
    _, log = trvo(small_env, small_policy, config)
    assert all(kl <= 0.01 for kl in log.column("kl_step"))
    assert all(0.0 <= f <= 1.0 for f in log.column("accepted_step_size"))


@pytest.mark.parametrize("mode", ["practical", "penalty"])
def test_empty_trust_region_keeps_the_policy(small_env, small_policy, mode):
    config = TrainConfig(lam=0.5, horizon=10, batch_size=30, iterations=3, kl_radius=0.0, trust_region=mode)
    policy, log = trvo(small_env, small_policy, config)
    np.testing.assert_array_equal(policy.theta, small_policy.theta)
    assert log.column("kl_step") == [0.0, 0.0, 0.0]


@pytest.mark.parametrize("gradient", ["sampled", "exact"])
def test_zero_step_size_keeps_the_policy(small_env, small_policy, gradient):
    config = TrainConfig(lam=0.5, horizon=10, batch_size=30, iterations=3, alpha=0.0, gradient=gradient)
    policy, log = vola_pg(small_env, small_policy, config)
    np.testing.assert_array_equal(policy.theta, small_policy.theta)
    assert all(g > 0 for g in log.column("grad_norm"))
    assert log.column("kl_step") == [0.0, 0.0, 0.0]


@pytest.mark.parametrize("lam", [0.0, 0.5, 5.0])
def test_penalty_trust_region_is_monotone(small_env, small_policy, lam):
    config = TrainConfig(lam=lam, trust_region="penalty", iterations=10, penalty_inner_steps=30)
    policy, log = trvo(small_env, small_policy, config)
    etas = log.column("eta_hat") + [exact_dp.perf_stats(small_env.mdp, policy, lam).eta]
    assert all(b >= a - 1e-12 for a, b in zip(etas, etas[1:]))
    assert all(p > 0 for p in log.column("penalty_coef"))


def test_trpo_exp_runs_the_sampled_update_only(small_env, small_policy):
    config = TrainConfig(horizon=5, batch_size=20, iterations=2, c=0.5)
    _, log = trpo_exp(small_env, small_policy, config)
    assert log.algorithm == "trpo-exp"
    with pytest.raises(UnsupportedConfiguration):
        trpo_exp(small_env, small_policy, config.with_(trust_region="penalty"))


def test_exp_utility_transform_is_concave_and_near_identity():
    r = np.linspace(-1.0, 1.0, 101)
    u = exp_utility_transform(r, 0.5)
    assert np.all(np.diff(u, 2) < 0)
    assert exp_utility_transform(0.3, 1e-6) == pytest.approx(0.3, rel=1e-5)
    assert exp_utility_transform(0.0, 2.0) == 0.0
    with pytest.raises(ValidationError):
        exp_utility_transform(1.0, 0.0)


def test_exp_utility_transform_warns_on_saturation():
    with pytest.warns(RuntimeWarning, match="saturated"):
        out = exp_utility_transform(np.array([-1e6, 1.0]), 1.0)
    assert np.all(np.isfinite(out))


@pytest.mark.parametrize("c", [0.01, 0.005])
def test_exp_utility_matches_mean_volatility_to_second_order(corpus, rng, c):
    for mdp in corpus:
        policy = softmax_policy(mdp.n_actions, mdp.n_states, rng.standard_normal(mdp.n_states * mdp.n_actions))
        row = check_exp_utility_approx(mdp, policy, [c]).iloc[0]
        assert row["nu2"] == pytest.approx(row["m2_minus_j2"], abs=1e-12)
        assert abs(row["gap"] - row["predicted_gap"]) <= 10.0 * c ** 4
