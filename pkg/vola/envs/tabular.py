import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..errors import ValidationError
from .base import Environment, StepResult

logger = logging.getLogger(__name__)

ROW_TOL = 1e-12

TWO_CYCLE_STATES = ("s0", "a_hi", "a_lo", "b_hi", "b_lo")
TWO_CYCLE_ACTIONS = ("a", "b")
SWITCH_PENALTY = -90.0


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Finite MDP <S, A, P, R, gamma, mu> with a declared reward bound"""
    transition: np.ndarray  # (S, A, S')
    reward: np.ndarray  # (S, A)
    gamma: float
    mu: np.ndarray  # (S,)
    r_max: float
    name: str = "tabular"

    def __post_init__(self):
        transition = np.asarray(self.transition, dtype=float)
        reward = np.asarray(self.reward, dtype=float)
        mu = np.asarray(self.mu, dtype=float)
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "reward", reward)
        object.__setattr__(self, "mu", mu)

        if transition.ndim != 3 or transition.shape[0] != transition.shape[2]:
            raise ValidationError(f"transition must have shape (S, A, S), got {transition.shape}")
        n_states, n_actions = transition.shape[:2]
        if n_states < 1 or n_actions < 1:
            raise ValidationError("an MDP needs at least one state and one action")
        if reward.shape != (n_states, n_actions):
            raise ValidationError(f"reward must have shape {(n_states, n_actions)}, got {reward.shape}")
        if mu.shape != (n_states,):
            raise ValidationError(f"mu must have shape ({n_states},), got {mu.shape}")
        if not (0.0 <= self.gamma < 1.0):
            raise ValidationError(f"gamma must lie in [0, 1), got {self.gamma}")
        if np.any(transition < 0) or np.max(np.abs(transition.sum(axis=2) - 1.0)) > ROW_TOL:
            raise ValidationError("every transition row must be a probability distribution")
        if np.any(mu < 0) or abs(mu.sum() - 1.0) > ROW_TOL:
            raise ValidationError("mu must be a probability distribution")
        if not np.all(np.isfinite(reward)) or np.max(np.abs(reward)) > self.r_max:
            raise ValidationError(f"rewards must be finite and bounded by r_max={self.r_max}")

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]


def build_random_tabular(seed: int, n_states: int, n_actions: int, gamma: float, r_max: float) -> TabularMdp:
    """Random MDP: Dirichlet(1) transition rows, uniform rewards on [-r_max, r_max], uniform mu"""
    if n_states < 1 or n_actions < 1:
        raise ValidationError(f"n_states and n_actions must be >= 1, got ({n_states}, {n_actions})")
    if not (0.0 <= gamma < 1.0):
        raise ValidationError(f"gamma must lie in [0, 1), got {gamma}")
    if not r_max > 0:
        raise ValidationError(f"r_max must be positive, got {r_max}")

    rng = np.random.default_rng(seed)
    transition = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    transition /= transition.sum(axis=2, keepdims=True)
    reward = rng.uniform(-r_max, r_max, size=(n_states, n_actions))
    mu = np.full(n_states, 1.0 / n_states)
    return TabularMdp(transition, reward, gamma, mu, r_max, name=f"random-{seed}")


def two_cycle_mdp(epsilon: float, gamma: float) -> TabularMdp:
    """
    Deterministic MDP with two disjoint 2-cycles reachable from s0.

    Repeating `a` earns (gamma + epsilon/2, -1), repeating `b` earns
    (10 gamma + epsilon, -10). Taking the other cycle's action from inside a
    cycle jumps to that cycle's high state with reward -90.
    """
    if not (0.0 <= epsilon < 1.0):
        raise ValidationError(f"epsilon must lie in [0, 1), got {epsilon}")
    if not (0.0 < gamma < 1.0):
        raise ValidationError(f"gamma must lie in (0, 1), got {gamma}")

    s0, a_hi, a_lo, b_hi, b_lo = range(5)
    act_a, act_b = 0, 1
    high = {act_a: gamma + epsilon / 2.0, act_b: 10.0 * gamma + epsilon}
    low = {act_a: -1.0, act_b: -10.0}

    transition = np.zeros((5, 2, 5))
    reward = np.zeros((5, 2))

    def link(state, action, target, r):
        transition[state, action, target] = 1.0
        reward[state, action] = r

    link(s0, act_a, a_lo, high[act_a])
    link(s0, act_b, b_lo, high[act_b])
    link(a_hi, act_a, a_lo, high[act_a])
    link(a_lo, act_a, a_hi, low[act_a])
    link(b_hi, act_b, b_lo, high[act_b])
    link(b_lo, act_b, b_hi, low[act_b])
    for state in (a_hi, a_lo):
        link(state, act_b, b_hi, SWITCH_PENALTY)
    for state in (b_hi, b_lo):
        link(state, act_a, a_hi, SWITCH_PENALTY)

    mu = np.zeros(5)
    mu[s0] = 1.0
    r_max = float(np.max(np.abs(reward)))
    return TabularMdp(transition, reward, gamma, mu, r_max, name=f"two-cycle-eps{epsilon}")


def deterministic_table(n_states: int, n_actions: int, action: int) -> np.ndarray:
    """Policy table that always picks `action`"""
    table = np.zeros((n_states, n_actions))
    table[:, action] = 1.0
    return table


def _inverse_cdf(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Index i with cumsum[i-1] <= u < cumsum[i], row-wise"""
    cums = np.cumsum(probs, axis=-1)
    idx = np.sum(cums <= u[..., None], axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


class TabularEnv(Environment):
    """Episodic sampler over a TabularMdp with one-hot (or supplied) state features"""

    def __init__(self, mdp: TabularMdp, horizon: int, features: Optional[np.ndarray] = None, seed: int = 0):
        if horizon < 1:
            raise ValidationError(f"horizon must be >= 1, got {horizon}")
        self.mdp = mdp
        self.features = np.eye(mdp.n_states) if features is None else np.asarray(features, dtype=float)
        if self.features.shape[0] != mdp.n_states:
            raise ValidationError("feature matrix needs one row per state")
        self.action_count = mdp.n_actions
        self.feature_dim = self.features.shape[1]
        self.horizon = horizon
        self.r_max = mdp.r_max
        self.state: int = 0
        super().__init__(seed)

    @property
    def is_one_hot(self) -> bool:
        return self.features.shape[0] == self.features.shape[1] and np.array_equal(self.features, np.eye(self.mdp.n_states))

    def state_features(self) -> np.ndarray:
        """Feature rows for every state, in state order"""
        return self.features

    def _reset(self, rng: np.random.Generator) -> np.ndarray:
        self.state = int(_inverse_cdf(self.mdp.mu, np.asarray(rng.random())))
        return self.features[self.state].copy()

    def _step(self, action: int, rng: np.random.Generator) -> StepResult:
        s = self.state
        reward = self.mdp.reward[s, action]
        nxt = int(_inverse_cdf(self.mdp.transition[s, action], np.asarray(rng.random())))
        self.state = nxt
        return StepResult(self.features[nxt].copy(), float(reward), False, {"state": s, "next_state": nxt})

    def sample_batch(self, table: np.ndarray, rngs: Sequence[np.random.Generator], horizon: int):
        """
        Vectorized rollouts under a tabular policy.

        Consumes each generator exactly like reset/step with a categorical policy
        (one uniform for the initial state, then one per action and one per
        transition), so the result matches the step-by-step path draw for draw.
        Returns (states, actions, rewards) arrays of shape (N, T).
        """
        n = len(rngs)
        uniforms = np.stack([g.random(1 + 2 * horizon) for g in rngs]) if n else np.zeros((0, 1 + 2 * horizon))
        states = np.zeros((n, horizon), dtype=int)
        actions = np.zeros((n, horizon), dtype=int)
        rewards = np.zeros((n, horizon))
        s = _inverse_cdf(np.broadcast_to(self.mdp.mu, (n, self.mdp.n_states)), uniforms[:, 0])
        for t in range(horizon):
            states[:, t] = s
            a = _inverse_cdf(table[s], uniforms[:, 1 + 2 * t])
            actions[:, t] = a
            rewards[:, t] = self.mdp.reward[s, a]
            s = _inverse_cdf(self.mdp.transition[s, a], uniforms[:, 2 + 2 * t])
        return states, actions, rewards

