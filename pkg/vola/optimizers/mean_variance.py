"""
Mean-variance baseline: REINFORCE-style ascent on J/(1 - gamma) - lam sigma^2.

This is a simplified two-moment estimator, not the external algorithm it
stands in for: each trajectory's summed score is weighted by
G_i - lam (G_i - mean G)^2.
"""

import logging
import time
from typing import Tuple

import numpy as np

from .. import exact_dp
from ..envs.base import Environment
from ..errors import ValidationError
from ..gradients import batch_scores, finite_diff_grad
from ..numerics import compensated_sum
from ..policy import PolicyParams
from ..sampling import Batch, collect, discounted_returns
from .common import (batch_stats, clip, ensure_finite, exact_stats, iteration_seed, mean_kl, require_tabular,
                     resolve_gamma)
from .config import TrainConfig, TrainLog, TrainRecord

logger = logging.getLogger(__name__)

FD_STEP = 1e-5


def mean_variance_gradient(batch: Batch, policy: PolicyParams, lam: float) -> np.ndarray:
    if batch.n < 2:
        raise ValidationError(f"the mean-variance estimator needs N >= 2 trajectories, got {batch.n}")
    returns = discounted_returns(batch)
    centered = returns - compensated_sum(returns) / batch.n
    weights = returns - lam * centered ** 2
    summed_scores = compensated_sum(batch_scores(batch, policy), axis=1)
    return compensated_sum(summed_scores * weights[:, None], axis=0) / batch.n


def mean_variance_objective(env, policy: PolicyParams, lam: float) -> float:
    """Exact J/(1 - gamma) - lam sigma^2 on a tabular environment"""
    mdp, features = require_tabular(env, policy)
    stats = exact_dp.perf_stats(mdp, policy.table(features), lam)
    return stats.j / (1.0 - mdp.gamma) - lam * stats.sigma2


def mean_variance_pg(env: Environment, policy0: PolicyParams, config: TrainConfig) -> Tuple[PolicyParams, TrainLog]:
    if config.gradient == "sampled" and config.batch_size < 2:
        raise ValidationError(f"the mean-variance estimator needs N >= 2 trajectories, got {config.batch_size}")
    log = TrainLog("mean-variance")
    gamma = resolve_gamma(env, config)
    policy = policy0
    for k in range(config.iterations):
        start = time.perf_counter()
        if config.gradient == "exact":
            _, features = require_tabular(env, policy)
            stats = exact_stats(env, policy, config.lam)
            base = policy

            def objective(theta):
                return mean_variance_objective(env, base.with_theta(theta), config.lam)

            grad = finite_diff_grad(objective, policy.theta, FD_STEP)
            objective_value = objective(policy.theta)
            states = features
        else:
            batch = collect(env, policy, config.batch_size, config.horizon, iteration_seed(config.seed, k),
                            gamma, config.jobs)
            stats = batch_stats(batch, config.lam)
            grad = mean_variance_gradient(batch, policy, config.lam)
            objective_value = stats.j / (1.0 - gamma) - config.lam * stats.sigma2
            states = batch.features[batch.mask]
        ensure_finite(grad, k)
        grad = clip(grad, config.clip_norm)

        new = policy.with_theta(policy.theta + config.alpha * grad)
        kl = mean_kl(policy, new, states)
        policy = new
        log.append(TrainRecord(k, stats.j, stats.nu2, stats.sigma2, stats.eta, float(np.linalg.norm(grad)), kl,
                               config.alpha, time.perf_counter() - start,
                               extras={"mv_objective": objective_value}))
    return policy, log
