"""
Trajectory collection and the finite-horizon estimators.

Every trajectory draws from its own generator spawned from a master
SeedSequence, so a batch depends only on (env, policy, n, horizon, seed) and
not on how the rollouts are spread over worker threads.
"""

import copy
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .artifacts import write_csv
from .envs.base import Environment
from .envs.tabular import TabularEnv
from .errors import ValidationError
from .numerics import compensated_sum
from .policy import PolicyParams

logger = logging.getLogger(__name__)

SeedLike = Union[int, np.random.SeedSequence]


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    mask: np.ndarray
    seed: int

    @property
    def length(self) -> int:
        """Steps before the episode ended (padding excluded)"""
        return int(np.sum(self.mask))

    @property
    def padded(self) -> bool:
        return self.length < len(self.rewards)


@dataclass(frozen=True, eq=False)
class Batch:
    """
    N trajectories stacked into (N, T, ...) arrays.

    Episodes that end before T are padded with zero-reward absorbing steps whose
    mask entry is False.
    """
    features: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    mask: np.ndarray
    seeds: np.ndarray
    gamma: float
    horizon: int
    state_ids: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.rewards.ndim != 2 or self.rewards.shape[0] == 0:
            raise ValidationError("a batch needs at least one trajectory")
        n, t = self.rewards.shape
        if t != self.horizon or self.actions.shape[:2] != (n, t) or self.mask.shape != (n, t):
            raise ValidationError("batch arrays disagree on (N, T)")
        if self.features.shape[:2] != (n, t) or len(self.seeds) != n:
            raise ValidationError("batch features or seeds disagree on (N, T)")
        if not 0.0 <= self.gamma < 1.0:
            raise ValidationError(f"gamma must lie in [0, 1), got {self.gamma}")

    @property
    def n(self) -> int:
        return self.rewards.shape[0]

    @property
    def any_padded(self) -> bool:
        return not bool(np.all(self.mask))

    @property
    def discounts(self) -> np.ndarray:
        return self.gamma ** np.arange(self.horizon)

    @property
    def normalizer(self) -> float:
        return horizon_normalizer(self.gamma, self.horizon)

    @property
    def trajectories(self) -> List[Trajectory]:
        return [Trajectory(self.features[i], self.actions[i], self.rewards[i], self.mask[i], int(self.seeds[i]))
                for i in range(self.n)]

    @classmethod
    def from_trajectories(cls, trajectories: Sequence[Trajectory], gamma: float) -> "Batch":
        if not trajectories:
            raise ValidationError("a batch needs at least one trajectory")
        return cls(
            features=np.stack([tr.states for tr in trajectories]),
            actions=np.stack([tr.actions for tr in trajectories]),
            rewards=np.stack([tr.rewards for tr in trajectories]),
            mask=np.stack([tr.mask for tr in trajectories]),
            seeds=np.array([tr.seed for tr in trajectories], dtype=np.uint64),
            gamma=gamma,
            horizon=len(trajectories[0].rewards),
        )


def horizon_normalizer(gamma: float, horizon: int) -> float:
    """(1 - gamma) / (1 - gamma^T)"""
    return (1.0 - gamma) / (1.0 - gamma ** horizon)


def _seed_id(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def _spawn(master_seed: SeedLike, n: int) -> List[np.random.SeedSequence]:
    seq = master_seed if isinstance(master_seed, np.random.SeedSequence) else np.random.SeedSequence(master_seed)
    return seq.spawn(n)


def rollout(env: Environment, policy: PolicyParams, horizon: int, rng: np.random.Generator,
            seed: int = 0) -> Trajectory:
    """One episode of at most `horizon` steps, padded to exactly `horizon`"""
    if horizon < 1:
        raise ValidationError(f"horizon must be >= 1, got {horizon}")
    action_dtype = int if policy.is_softmax else float
    states = np.zeros((horizon, env.feature_dim))
    actions = np.zeros(horizon, dtype=action_dtype)
    rewards = np.zeros(horizon)
    mask = np.zeros(horizon, dtype=bool)

    x = env.reset(rng)
    for t in range(horizon):
        states[t] = x
        a = policy.sample(x, rng)
        result = env.step(policy.to_env_action(a), rng)
        actions[t] = a
        rewards[t] = result.reward
        mask[t] = True
        x = result.features
        if result.done and t + 1 < horizon:
            states[t + 1:] = x
            break
    return Trajectory(states, actions, rewards, mask, seed)


def _fast_path(env: Environment, policy: PolicyParams, horizon: int) -> bool:
    return (isinstance(env, TabularEnv) and policy.is_softmax
            and policy.state_dim == env.feature_dim and horizon <= env.horizon)


def _collect_tabular(env: TabularEnv, policy: PolicyParams, horizon: int, seqs, gamma: float) -> Batch:
    rngs = [np.random.default_rng(s) for s in seqs]
    table = policy.table(env.state_features())
    states, actions, rewards = env.sample_batch(table, rngs, horizon)
    return Batch(
        features=env.state_features()[states],
        actions=actions,
        rewards=rewards,
        mask=np.ones_like(rewards, dtype=bool),
        seeds=np.array([_seed_id(s) for s in seqs], dtype=np.uint64),
        gamma=gamma,
        horizon=horizon,
        state_ids=states,
    )


def _rollout_chunk(env: Environment, policy: PolicyParams, horizon: int, seqs) -> List[Trajectory]:
    return [rollout(env, policy, horizon, np.random.default_rng(s), _seed_id(s)) for s in seqs]


def collect(env: Environment, policy: PolicyParams, n: int, horizon: int, master_seed: SeedLike,
            gamma: Optional[float] = None, jobs: int = 1) -> Batch:
    """N independent trajectories, one spawned substream each"""
    if n < 1:
        raise ValidationError(f"batch size must be >= 1, got {n}")
    if horizon < 1:
        raise ValidationError(f"horizon must be >= 1, got {horizon}")
    gamma = _env_gamma(env) if gamma is None else gamma
    seqs = _spawn(master_seed, n)
    if _fast_path(env, policy, horizon):
        return _collect_tabular(env, policy, horizon, seqs, gamma)

    if jobs <= 1 or n == 1:
        trajectories = _rollout_chunk(env, policy, horizon, seqs)
    else:
        chunks = [list(c) for c in np.array_split(np.arange(n), min(jobs, n))]
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            futures = [pool.submit(_rollout_chunk, copy.deepcopy(env), policy, horizon, [seqs[i] for i in c])
                       for c in chunks]
            trajectories = [tr for f in futures for tr in f.result()]
    batch = Batch.from_trajectories(trajectories, gamma)
    if batch.any_padded:
        logger.debug("batch has %d padded trajectories", int(np.sum(~batch.mask.all(axis=1))))
    return batch


def collect_triple(env: Environment, policy: PolicyParams, n: int, horizon: int, master_seed: SeedLike,
                   sizes: Optional[Tuple[int, int, int]] = None, gamma: Optional[float] = None,
                   jobs: int = 1) -> Tuple[Batch, Batch, Batch]:
    """Three independent batches D1, D2, D3 (equal size n unless `sizes` is given)"""
    sizes = (n, n, n) if sizes is None else sizes
    seqs = _spawn(master_seed, 3)
    return tuple(collect(env, policy, size, horizon, seq, gamma, jobs) for size, seq in zip(sizes, seqs))


def _env_gamma(env: Environment) -> float:
    gamma = getattr(env, "gamma", None)
    if gamma is None and isinstance(env, TabularEnv):
        gamma = env.mdp.gamma
    if gamma is None:
        raise ValidationError(f"{type(env).__name__} has no discount factor; pass gamma explicitly")
    return float(gamma)


def discounted_return(traj: Trajectory, gamma: float) -> float:
    """sum_{t<T} gamma^t R_t"""
    return compensated_sum(gamma ** np.arange(len(traj.rewards)) * np.where(traj.mask, traj.rewards, 0.0))


def discounted_returns(batch: Batch) -> np.ndarray:
    return compensated_sum(np.where(batch.mask, batch.rewards, 0.0) * batch.discounts, axis=1)


def _normalized_mean(batch: Batch, per_step: np.ndarray) -> float:
    """Normalized discounted mean over the batch; padded steps contribute nothing"""
    per_step = np.where(batch.mask, per_step, 0.0)
    per_traj = compensated_sum(per_step * batch.discounts, axis=1)
    return batch.normalizer * compensated_sum(per_traj) / batch.n


def estimate_j(batch: Batch) -> float:
    """J_hat = (1 - gamma)/(1 - gamma^T) (1/N) sum_i sum_t gamma^t R_t"""
    return _normalized_mean(batch, batch.rewards)


def estimate_m2(batch: Batch) -> float:
    return _normalized_mean(batch, batch.rewards ** 2)


def estimate_volatility(batch: Batch, j1: float, j2: float) -> float:
    """X_hat with the two centering estimates j1, j2"""
    return _normalized_mean(batch, (batch.rewards - j1) * (batch.rewards - j2))


def check_disjoint(*batches: Batch) -> None:
    seen = set()
    for batch in batches:
        ids = set(int(s) for s in batch.seeds)
        if seen & ids:
            raise ValidationError("triple sampling needs batches drawn from disjoint seeds")
        seen |= ids


def triple_sample_volatility(d1: Batch, d2: Batch, d3: Batch) -> float:
    """Unbiased volatility estimate: centers from D1 and D2, rewards from D3"""
    check_disjoint(d1, d2, d3)
    return estimate_volatility(d3, estimate_j(d1), estimate_j(d2))


def single_sample_volatility(batch: Batch) -> float:
    j = estimate_j(batch)
    return estimate_volatility(batch, j, j)


def estimate_sigma(batch: Batch) -> float:
    """Unbiased sample variance of the per-trajectory discounted returns"""
    if batch.n < 2:
        raise ValidationError(f"return variance needs N >= 2 trajectories, got {batch.n}")
    returns = discounted_returns(batch)
    mean = compensated_sum(returns) / batch.n
    return compensated_sum((returns - mean) ** 2) / (batch.n - 1)


def estimate_eta(batch: Batch, lam: float) -> float:
    return estimate_j(batch) - lam * single_sample_volatility(batch)


def export_batch_csv(batch: Batch, path: Union[str, Path], metadata: Optional[dict] = None) -> Path:
    """Write the valid steps as (traj_id, t, action, reward) rows"""
    traj, t = np.nonzero(batch.mask)
    frame = pd.DataFrame({
        "traj_id": traj,
        "t": t,
        "action": batch.actions[traj, t],
        "reward": batch.rewards[traj, t],
    })
    return write_csv(frame, path, metadata or {})
