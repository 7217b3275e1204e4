import logging
import time
from typing import Tuple

import numpy as np

from .. import exact_dp
from ..envs.base import Environment
from ..gradients import estimate_gradient
from ..policy import PolicyParams
from ..sampling import collect
from .common import (batch_stats, clip, ensure_finite, exact_stats, iteration_seed, mean_kl, require_tabular,
                     resolve_gamma)
from .config import TrainConfig, TrainLog, TrainRecord

logger = logging.getLogger(__name__)


def vola_pg(env: Environment, policy0: PolicyParams, config: TrainConfig) -> Tuple[PolicyParams, TrainLog]:
    """
    Volatility-averse policy gradient ascent on eta = J - lam nu^2.

    Each iteration collects N trajectories, estimates J from them and steps
    theta by alpha times the estimated gradient. With config.gradient == "exact"
    the tabular exact gradient replaces the sampled one.
    """
    log = TrainLog("vola-pg")
    gamma = resolve_gamma(env, config)
    policy = policy0
    for k in range(config.iterations):
        start = time.perf_counter()
        if config.gradient == "exact":
            mdp, features = require_tabular(env, policy)
            stats = exact_stats(env, policy, config.lam)
            grad = exact_dp.exact_gradient_eta(mdp, policy, config.lam, features)
            states = features
        else:
            batch = collect(env, policy, config.batch_size, config.horizon, iteration_seed(config.seed, k),
                            gamma, config.jobs)
            stats = batch_stats(batch, config.lam)
            grad = estimate_gradient(config.estimator, batch, policy, config.lam, stats.j, config.baseline).vector
            states = batch.features[batch.mask]
        ensure_finite(grad, k)
        grad = clip(grad, config.clip_norm)

        new = policy.with_theta(policy.theta + config.alpha * grad)
        kl = mean_kl(policy, new, states)
        policy = new
        log.append(TrainRecord(k, stats.j, stats.nu2, stats.sigma2, stats.eta, float(np.linalg.norm(grad)),
                               kl, config.alpha, time.perf_counter() - start))
    return policy, log
