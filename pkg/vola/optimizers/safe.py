"""
Safe step and batch sizes for mean-volatility gradient ascent.

L bounds the spectral norm of the Hessian of eta over the policy class, so a
step alpha* = 1/(2L) along a gradient estimate whose error is at most half its
norm improves eta by at least |g|^2 / (8L). The estimation error is bounded with
a Hotelling-type confidence region built from the per-trajectory gradients.
"""

import logging
import math
import sys
import time
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .. import exact_dp
from ..envs.base import Environment
from ..envs.tabular import TabularEnv
from ..errors import ValidationError
from ..gradients import trajectory_gradients
from ..numerics import compensated_sum, f_quantile, sample_covariance, spectral_norm
from ..policy import PolicyParams, SmoothingConstants, smoothing_constants
from ..sampling import collect
from .common import (batch_stats, clip, ensure_finite, exact_stats, iteration_seed, mean_kl, require_tabular,
                     resolve_gamma)
from .config import TrainConfig, TrainLog, TrainRecord

logger = logging.getLogger(__name__)

UNBOUNDED_BATCH = sys.maxsize


@dataclass(frozen=True)
class SafeConfig:
    delta: float = 0.1
    safety_factor: float = 1.0
    uniform_bounds: bool = True
    max_batch: int = 20000

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValidationError(f"delta must lie in (0, 1), got {self.delta}")
        if self.safety_factor < 1.0:
            raise ValidationError(f"safety_factor must be >= 1, got {self.safety_factor}")
        if self.max_batch < 2:
            raise ValidationError(f"max_batch must be >= 2, got {self.max_batch}")


@dataclass(frozen=True)
class SafeMetaParams:
    smoothing: SmoothingConstants
    c_bound: float
    l_bound: float
    eps_delta: float
    alpha_star: float
    n_star: int
    delta: float
    grad_norm: float

    @property
    def guaranteed_improvement(self) -> float:
        """|g|^2 / (8L), valid with probability 1 - delta once N >= n_star"""
        return self.grad_norm ** 2 / (8.0 * self.l_bound)


def c_bound(r_max: float, lam: float, j: Optional[float] = None) -> float:
    """
    sup |R - lam (R - J)^2| over |R| <= r_max.

    With j=None the supremum also ranges over |J| <= r_max, which bounds every
    policy at once.
    """
    if r_max < 0 or lam < 0:
        raise ValidationError("r_max and lambda must be non-negative")
    if lam == 0:
        return float(r_max)
    if j is None:
        return float(r_max + 4.0 * lam * r_max * r_max)
    candidates = [-r_max, r_max]
    stationary = j + 1.0 / (2.0 * lam)
    if -r_max <= stationary <= r_max:
        candidates.append(stationary)
    return float(max(abs(r - lam * (r - j) ** 2) for r in candidates))


def l_bound(smoothing: SmoothingConstants, c: float, r_max: float, gamma: float, lam: float = 0.0) -> float:
    """
    c/(1-gamma)^2 (2 gamma psi^2/(1-gamma) + kappa + xi) + 2 w r_max^2 psi^2/(1-gamma)^3.

    The last term bounds 2 lam |grad J|^2; w = max(1, lam (1 - gamma)) keeps it
    a bound when lam exceeds 1/(1 - gamma).
    """
    psi, kappa, xi = smoothing.psi, smoothing.kappa, smoothing.xi
    one = 1.0 - gamma
    weight = max(1.0, lam * one)
    return (c / one ** 2 * (2.0 * gamma * psi ** 2 / one + kappa + xi)
            + 2.0 * weight * r_max ** 2 * psi ** 2 / one ** 3)


def _n_star(eps_delta: float, grad_norm: float) -> int:
    if grad_norm == 0.0:
        return 1 if eps_delta == 0.0 else UNBOUNDED_BATCH
    return max(1, math.ceil(4.0 * eps_delta ** 2 / grad_norm ** 2))


def safe_meta_params(grad_samples, smoothing: SmoothingConstants, r_max: float, gamma: float, lam: float,
                     j_current: Optional[float], delta: float) -> SafeMetaParams:
    samples = np.atleast_2d(np.asarray(grad_samples, dtype=float))
    n, m = samples.shape
    if n <= m:
        raise ValidationError(f"the confidence region needs more gradient samples than parameters (N={n}, m={m})")
    if not 0.0 < delta < 1.0:
        raise ValidationError(f"delta must lie in (0, 1), got {delta}")
    grad = compensated_sum(samples, axis=0) / n
    cov_norm = spectral_norm(sample_covariance(samples))
    eps = math.sqrt(n * m / (n - m) * cov_norm * f_quantile(1.0 - delta, m, n - m)) if cov_norm > 0 else 0.0
    c = c_bound(r_max, lam, j_current)
    big_l = l_bound(smoothing, c, r_max, gamma, lam)
    if not big_l > 0:
        raise ValidationError("the Hessian bound must be positive; check the smoothing constants")
    grad_norm = float(np.linalg.norm(grad))
    return SafeMetaParams(smoothing, c, big_l, eps, 1.0 / (2.0 * big_l), _n_star(eps, grad_norm), delta, grad_norm)


def exact_meta_params(smoothing: SmoothingConstants, r_max: float, gamma: float, lam: float,
                      j_current: Optional[float], grad: np.ndarray) -> SafeMetaParams:
    """Meta-parameters for an exact gradient (no estimation error)"""
    c = c_bound(r_max, lam, j_current)
    big_l = l_bound(smoothing, c, r_max, gamma, lam)
    if not big_l > 0:
        raise ValidationError("the Hessian bound must be positive; check the smoothing constants")
    return SafeMetaParams(smoothing, c, big_l, 0.0, 1.0 / (2.0 * big_l), 1, 0.0, float(np.linalg.norm(grad)))


def _smoothing(env: Environment, policy: PolicyParams, states: np.ndarray, safe: SafeConfig) -> SmoothingConstants:
    if isinstance(env, TabularEnv):
        states = env.state_features()
    return smoothing_constants(policy, states, safe.safety_factor, uniform=safe.uniform_bounds and policy.is_softmax)


def safe_vola_pg(env: Environment, policy0: PolicyParams, config: TrainConfig,
                 safe: SafeConfig = SafeConfig()) -> Tuple[PolicyParams, TrainLog]:
    """
    Gradient ascent with alpha* = 1/(2L), growing each iteration's batch until N >= N*.

    The gradient estimator scales the return part by (1-gamma)/(1-gamma^T) so
    that it targets grad eta. Training stops with a flagged log entry when N*
    exceeds safe.max_batch. On tabular environments the realized improvement is
    logged next to the guaranteed one.
    """
    log = TrainLog("safe-vola-pg")
    gamma = resolve_gamma(env, config)
    tabular = isinstance(env, TabularEnv)
    policy = policy0
    for k in range(config.iterations):
        start = time.perf_counter()
        uniform_j = safe.uniform_bounds
        if config.gradient == "exact":
            require_tabular(env, policy)
            stats = exact_stats(env, policy, config.lam)
            grad = exact_dp.exact_gradient_eta(env.mdp, policy, config.lam, env.state_features())
            smoothing = _smoothing(env, policy, env.state_features(), safe)
            params = exact_meta_params(smoothing, env.r_max, gamma, config.lam, None if uniform_j else stats.j, grad)
            guaranteed = params.grad_norm ** 2 / (4.0 * params.l_bound)
            n_used = 0
            states = env.state_features()
        else:
            n = max(config.batch_size, policy.m + 2)
            attempt = 0
            while True:
                batch = collect(env, policy, n, config.horizon, iteration_seed(config.seed, k, attempt),
                                gamma, config.jobs)
                stats = batch_stats(batch, config.lam)
                rows = trajectory_gradients(batch, policy, config.lam, stats.j, normalize_return=True)
                smoothing = _smoothing(env, policy, batch.features[batch.mask], safe)
                params = safe_meta_params(rows, smoothing, env.r_max, gamma, config.lam,
                                          None if uniform_j else stats.j, safe.delta)
                if n >= params.n_star:
                    break
                if params.n_star > safe.max_batch:
                    log.flag(k, f"required batch size N*={params.n_star} exceeds max_batch={safe.max_batch}; stopping")
                    return policy, log
                logger.debug("iter %d: growing batch from %d to N*=%d", k, n, params.n_star)
                n = params.n_star
                attempt += 1
            grad = compensated_sum(rows, axis=0) / rows.shape[0]
            guaranteed = params.guaranteed_improvement
            n_used = n
            states = batch.features[batch.mask]
        ensure_finite(grad, k)
        grad = clip(grad, config.clip_norm)
        new = policy.with_theta(policy.theta + params.alpha_star * grad)
        realized = float("nan")
        if tabular:
            realized = exact_stats(env, new, config.lam).eta - exact_stats(env, policy, config.lam).eta
        kl = mean_kl(policy, new, states)
        policy = new
        log.append(TrainRecord(k, stats.j, stats.nu2, stats.sigma2, stats.eta, float(np.linalg.norm(grad)),
                               kl, params.alpha_star, time.perf_counter() - start,
                               extras={"batch_size": n_used, "n_star": params.n_star, "eps_delta": params.eps_delta,
                                       "l_bound": params.l_bound, "guaranteed_improvement": guaranteed,
                                       "realized_improvement": realized}))
    return policy, log
