"""
Safe step and batch sizes: reward bounds, the Hessian bound and safe gradient ascent
"""
import math

import numpy as np
import pytest
from scipy import stats

from vola.errors import ValidationError
from vola.optimizers import (SafeConfig, TrainConfig, c_bound, exact_meta_params, l_bound, safe_meta_params,
                             safe_vola_pg)
from vola.optimizers.safe import UNBOUNDED_BATCH, _n_star
from vola.policy import SmoothingConstants


@pytest.mark.parametrize("r_max,lam,j", [(1.0, 0.5, 0.2), (1.0, 0.1, -0.9), (2.0, 3.0, 1.0), (1.0, 0.0, 0.3)])
def test_c_bound_is_the_supremum_over_rewards(r_max, lam, j):
    r = np.linspace(-r_max, r_max, 200001)
    brute = float(np.max(np.abs(r - lam * (r - j) ** 2)))
    assert c_bound(r_max, lam, j) == pytest.approx(brute, rel=1e-8, abs=1e-10)


def test_uniform_c_bound_covers_every_mean():
    r_max, lam = 1.5, 0.7
    grid = np.linspace(-r_max, r_max, 301)
    worst = max(c_bound(r_max, lam, j) for j in grid)
    assert c_bound(r_max, lam) == pytest.approx(worst)
    assert c_bound(r_max, lam) == pytest.approx(r_max + 4.0 * lam * r_max ** 2)


def test_l_bound_formula():
    smoothing = SmoothingConstants(psi=0.5, kappa=0.4, xi=0.3)
    gamma, c, r_max = 0.9, 2.0, 1.0
    expected = c / 0.01 * (2 * 0.9 * 0.25 / 0.1 + 0.4 + 0.3) + 2 * 0.25 / 0.001
    assert l_bound(smoothing, c, r_max, gamma) == pytest.approx(expected)
    assert l_bound(smoothing, c, r_max, gamma, lam=5.0) == pytest.approx(expected)
    assert l_bound(smoothing, c, r_max, gamma, lam=50.0) > expected


def test_n_star():
    assert _n_star(1.0, 2.0) == 1
    assert _n_star(3.0, 1.0) == 36
    assert _n_star(0.0, 0.0) == 1
    assert _n_star(1.0, 0.0) == UNBOUNDED_BATCH


def test_meta_params_from_gradient_samples(rng):
    samples = rng.standard_normal((50, 3)) + np.array([1.0, 0.0, -0.5])
    smoothing = SmoothingConstants(1.0, 1.0, 0.5)
    params = safe_meta_params(samples, smoothing, 1.0, 0.9, 0.5, None, 0.1)
    cov = np.cov(samples.T, bias=True)
    eps = math.sqrt(50 * 3 / 47 * np.max(np.linalg.eigvalsh(cov)) * stats.f.ppf(0.9, 3, 47))
    assert params.eps_delta == pytest.approx(eps, rel=1e-7)
    assert params.alpha_star == pytest.approx(1.0 / (2.0 * params.l_bound))
    assert params.n_star == max(1, math.ceil(4 * params.eps_delta ** 2 / params.grad_norm ** 2))
    assert params.guaranteed_improvement == pytest.approx(params.grad_norm ** 2 / (8 * params.l_bound))


def test_identical_gradient_samples_need_one_trajectory():
    samples = np.tile([0.3, -0.4], (5, 1))
    params = safe_meta_params(samples, SmoothingConstants(1.0, 1.0, 1.0), 1.0, 0.5, 0.0, 0.0, 0.05)
    assert params.eps_delta == 0.0
    assert params.n_star == 1
    assert params.grad_norm == pytest.approx(0.5)


def test_meta_params_validation(rng):
    smoothing = SmoothingConstants(1.0, 1.0, 1.0)
    with pytest.raises(ValidationError):
        safe_meta_params(rng.standard_normal((3, 3)), smoothing, 1.0, 0.9, 0.0, None, 0.1)
    with pytest.raises(ValidationError):
        safe_meta_params(rng.standard_normal((10, 3)), smoothing, 1.0, 0.9, 0.0, None, 1.0)
    with pytest.raises(ValidationError):
        exact_meta_params(SmoothingConstants(0.0, 0.0, 0.0), 1.0, 0.9, 0.0, None, np.ones(2))
    with pytest.raises(ValidationError):
        SafeConfig(delta=0.0)
    with pytest.raises(ValidationError):
        SafeConfig(safety_factor=0.5)


def test_exact_safe_ascent_meets_its_guarantee(small_env, small_policy):
    config = TrainConfig(lam=0.5, gradient="exact", iterations=5)
    _, log = safe_vola_pg(small_env, small_policy, config)
    realized = log.column("realized_improvement")
    guaranteed = log.column("guaranteed_improvement")
    assert len(realized) == 5
    assert all(r >= g - 1e-12 for r, g in zip(realized, guaranteed))
    assert all(n == 1 for n in log.column("n_star"))
    kl_steps = log.column("kl_step")
    assert min(kl_steps) >= 0.0
    assert max(kl_steps) > 0.0


def test_sampled_safe_ascent_stops_when_the_batch_cap_is_hit(small_env, small_policy):
    config = TrainConfig(lam=0.5, horizon=5, batch_size=1, iterations=3)
    _, log = safe_vola_pg(small_env, small_policy, config, SafeConfig(max_batch=20))
    assert log.flags
    assert "exceeds max_batch=20" in log.flags[0]
    assert len(log) < 3
