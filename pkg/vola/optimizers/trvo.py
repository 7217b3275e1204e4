"""
Trust-region volatility optimization.

`practical` follows the usual trust-region recipe on sampled data: advantage
estimates of the shaped reward, a conjugate-gradient solve of the Fisher system
and a backtracking line search under a mean-KL constraint. `penalty` maximizes
the penalized surrogate eta_k + sum d pi_theta A^lam - C KL_max exactly on
tabular environments.
"""

import logging
import time
from dataclasses import replace
from typing import Callable, Optional, Tuple

import numpy as np

from .. import exact_dp
from ..envs.base import Environment
from ..gradients import batch_scores, reward_to_go, shaped_rewards
from ..policy import PolicyParams, fisher_vector_product, kl_batch, log_prob_batch
from ..sampling import Batch, collect
from .common import (batch_stats, ensure_finite, exact_stats, iteration_seed, require_tabular,
                     resolve_gamma)
from .config import TrainConfig, TrainLog, TrainRecord

logger = logging.getLogger(__name__)

RewardTransform = Callable[[np.ndarray], np.ndarray]


def conjugate_gradient(apply_a: Callable[[np.ndarray], np.ndarray], b: np.ndarray, max_iter: int,
                       tol: float = 1e-10) -> Tuple[np.ndarray, bool]:
    """Solve A x = b for symmetric positive definite A given as a product; returns (x, converged)"""
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = float(r @ r)
    threshold = tol * max(float(b @ b), 1e-300)
    if rr <= threshold:
        return x, True
    for _ in range(max_iter):
        ap = apply_a(p)
        curvature = float(p @ ap)
        if not curvature > 0:
            return x, False
        step = rr / curvature
        x = x + step * p
        r = r - step * ap
        rr_next = float(r @ r)
        if rr_next <= threshold:
            return x, True
        p = r + (rr_next / rr) * p
        rr = rr_next
    return x, False


def linear_baseline(features: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Least-squares fit of targets on [features, 1]; equals per-state means for one-hot features"""
    design = np.hstack((features, np.ones((features.shape[0], 1))))
    coef, *_ = np.linalg.lstsq(design, targets, rcond=None)
    return design @ coef


def empirical_advantages(batch: Batch, lam: float, j_hat: float) -> np.ndarray:
    """Reward-to-go of the shaped reward minus a fitted state baseline, on the valid steps"""
    rtg = reward_to_go(shaped_rewards(batch, lam, j_hat), batch.gamma)
    valid = batch.mask
    return rtg[valid] - linear_baseline(batch.features[valid], rtg[valid])


def _practical_step(policy: PolicyParams, batch: Batch, config: TrainConfig, j_hat: float,
                    log: TrainLog, k: int) -> Tuple[PolicyParams, float, float, float]:
    """One KL-constrained update; returns (policy, grad_norm, kl, accepted step fraction)"""
    valid = batch.mask
    states = batch.features[valid]
    actions = batch.actions[valid]
    adv = empirical_advantages(batch, config.lam, j_hat)
    grad = np.mean(batch_scores(batch, policy)[valid] * adv[:, None], axis=0)
    ensure_finite(grad, k)
    grad_norm = float(np.linalg.norm(grad))
    if config.kl_radius == 0.0 or grad_norm == 0.0:
        return policy, grad_norm, 0.0, 0.0

    def fvp(v):
        return fisher_vector_product(policy, states, v, config.cg_damping)

    direction, converged = conjugate_gradient(fvp, grad, config.cg_iters, config.cg_tol)
    shs = float(direction @ fvp(direction)) if converged else 0.0
    if not converged or not shs > 0:
        log.flag(k, "conjugate gradient did not converge; falling back to the scaled gradient")
        direction = grad
        shs = float(direction @ fvp(direction))
    ensure_finite(direction, k, "search direction")
    full_step = np.sqrt(2.0 * config.kl_radius / shs) * direction

    old_logp = log_prob_batch(policy, states, actions)
    baseline_surrogate = float(np.mean(adv))
    for i in range(config.backtrack_steps):
        fraction = config.backtrack_coef ** i
        candidate = policy.with_theta(policy.theta + fraction * full_step)
        ratio = np.exp(log_prob_batch(candidate, states, actions) - old_logp)
        improvement = float(np.mean(ratio * adv)) - baseline_surrogate
        kl = float(np.mean(kl_batch(policy, candidate, states)))
        if kl <= config.kl_radius and improvement > 0:
            return candidate, grad_norm, kl, fraction
    logger.info("iter %d: line search rejected all %d steps", k, config.backtrack_steps)
    return policy, grad_norm, 0.0, 0.0


def _penalty_step(env, policy: PolicyParams, config: TrainConfig) -> Tuple[PolicyParams, float, float, dict]:
    """Gradient ascent on the penalized surrogate; a step is taken only if it raises the surrogate"""
    mdp, features = require_tabular(env, policy)
    gamma = mdp.gamma
    old_table = policy.table(features)
    a_lambda = exact_dp.advantage_lambda(mdp, old_table, config.lam)
    d = exact_dp.occupancy(mdp, old_table).d_mu
    eta_k = exact_dp.perf_stats(mdp, old_table, config.lam).eta
    penalty = 2.0 * float(np.max(np.abs(a_lambda))) * gamma / (1.0 - gamma)
    phi = policy.phi(features)

    def surrogate(theta) -> Tuple[float, np.ndarray]:
        table = policy.with_theta(theta).table(features)
        kl = exact_dp.table_kl(old_table, table)
        return eta_k + float(np.sum(d[:, None] * table * a_lambda)) - penalty * float(np.max(kl)), table

    def surrogate_grad(theta, table) -> np.ndarray:
        centered = a_lambda - np.sum(table * a_lambda, axis=1, keepdims=True)
        g = (d[:, None] * table * centered).T @ phi
        worst = int(np.argmax(exact_dp.table_kl(old_table, table)))
        g = g - penalty * np.outer(table[worst] - old_table[worst], phi[worst])
        return g.ravel()

    theta = policy.theta.copy()
    value, table = surrogate(theta)
    step = config.penalty_step
    for _ in range(config.penalty_inner_steps):
        g = surrogate_grad(theta, table)
        if not np.any(g):
            break
        candidate = theta + step * g
        cand_value, cand_table = surrogate(candidate)
        if cand_value > value:
            theta, value, table = candidate, cand_value, cand_table
        else:
            step *= 0.5
    new = policy.with_theta(theta)
    kl_max = float(np.max(exact_dp.table_kl(old_table, table)))
    grad_norm = float(np.linalg.norm(surrogate_grad(policy.theta, old_table)))
    return new, grad_norm, kl_max, {"surrogate": value, "penalty_coef": penalty}


def trvo(env: Environment, policy0: PolicyParams, config: TrainConfig,
         reward_transform: Optional[RewardTransform] = None, algorithm: str = "trvo") -> Tuple[PolicyParams, TrainLog]:
    """
    Runs config.iterations trust-region updates.

    `reward_transform` is applied to the sampled rewards before advantage
    estimation (statistics in the log stay on the raw rewards).
    """
    log = TrainLog(algorithm)
    gamma = resolve_gamma(env, config)
    policy = policy0
    for k in range(config.iterations):
        start = time.perf_counter()
        extras = {}
        if config.trust_region == "penalty":
            stats = exact_stats(env, policy, config.lam)
            if config.kl_radius == 0.0:
                grad_norm, kl, fraction = 0.0, 0.0, 0.0
            else:
                policy, grad_norm, kl, extras = _penalty_step(env, policy, config)
                fraction = 1.0
        else:
            batch = collect(env, policy, config.batch_size, config.horizon, iteration_seed(config.seed, k),
                            gamma, config.jobs)
            stats = batch_stats(batch, config.lam)
            train_batch = batch
            if reward_transform is not None:
                train_batch = replace(batch, rewards=np.where(batch.mask, reward_transform(batch.rewards), 0.0))
            j_train = stats.j if reward_transform is None else batch_stats(train_batch, 0.0).j
            policy, grad_norm, kl, fraction = _practical_step(policy, train_batch, config, j_train, log, k)
        log.append(TrainRecord(k, stats.j, stats.nu2, stats.sigma2, stats.eta, grad_norm, kl, fraction,
                               time.perf_counter() - start, extras=extras))
    return policy, log

