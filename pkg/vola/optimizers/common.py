"""Helpers shared by the training loops."""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .. import exact_dp
from ..envs.base import Environment
from ..envs.tabular import TabularEnv, TabularMdp
from ..errors import NumericalError, UnsupportedConfiguration
from ..policy import PolicyParams, kl_batch
from ..sampling import Batch, estimate_j, estimate_sigma, single_sample_volatility
from .config import TrainConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IterationStats:
    j: float
    nu2: float
    sigma2: float
    eta: float


def resolve_gamma(env: Environment, config: TrainConfig) -> float:
    """Tabular environments carry their own discount; the others use the configured one"""
    if isinstance(env, TabularEnv):
        if not math.isclose(env.mdp.gamma, config.gamma):
            logger.debug("using the MDP's gamma=%g instead of train.gamma=%g", env.mdp.gamma, config.gamma)
        return env.mdp.gamma
    return config.gamma


def iteration_seed(seed: int, iteration: int, attempt: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence((seed, iteration, attempt))


def require_tabular(env: Environment, policy: PolicyParams) -> Tuple[TabularMdp, np.ndarray]:
    if not isinstance(env, TabularEnv):
        raise UnsupportedConfiguration(f"exact mode needs a tabular environment, got {type(env).__name__}")
    if not policy.is_softmax:
        raise UnsupportedConfiguration("exact mode needs a softmax_linear policy")
    return env.mdp, env.state_features()


def batch_stats(batch: Batch, lam: float) -> IterationStats:
    j = estimate_j(batch)
    nu2 = single_sample_volatility(batch)
    sigma2 = estimate_sigma(batch) if batch.n >= 2 else float("nan")
    return IterationStats(j, nu2, sigma2, j - lam * nu2)


def exact_stats(env: TabularEnv, policy: PolicyParams, lam: float) -> IterationStats:
    stats = exact_dp.perf_stats(env.mdp, policy.table(env.state_features()), lam)
    return IterationStats(stats.j, stats.nu2, stats.sigma2, stats.eta)


def ensure_finite(vector: np.ndarray, iteration: int, what: str = "gradient") -> None:
    if not np.all(np.isfinite(vector)):
        raise NumericalError(f"non-finite {what} at iteration {iteration}: {vector}")


def clip(vector: np.ndarray, clip_norm: Optional[float]) -> np.ndarray:
    if clip_norm is None:
        return vector
    norm = float(np.linalg.norm(vector))
    return vector * (clip_norm / norm) if norm > clip_norm else vector


def mean_kl(old: PolicyParams, new: PolicyParams, states: np.ndarray) -> float:
    states = np.asarray(states, dtype=float).reshape(-1, old.state_dim)
    return float(np.mean(kl_batch(old, new, states)))
