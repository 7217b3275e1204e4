"""
Shared fixtures: seeded generators, small random MDPs and softmax policies over them
"""
import numpy as np
import pytest

from vola.envs.tabular import TabularEnv, build_random_tabular, two_cycle_mdp
from vola.policy import softmax_policy

# PARAMS
seed = 123
z_limit = 4.0  # statistical tests accept within four standard errors


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(seed)


@pytest.fixture
def small_mdp():
    return build_random_tabular(3, 4, 3, 0.9, 1.0)


@pytest.fixture
def corpus():
    """A handful of random MDPs across the discount factors the theorem checks use"""
    return [build_random_tabular(s, 2 + s % 5, 2 + s % 3, (0.5, 0.9, 0.99)[s % 3], 1.0) for s in range(6)]


@pytest.fixture
def small_policy(small_mdp, rng):
    return softmax_policy(small_mdp.n_actions, small_mdp.n_states,
                          rng.standard_normal(small_mdp.n_states * small_mdp.n_actions))


@pytest.fixture
def small_env(small_mdp):
    return TabularEnv(small_mdp, horizon=20)


@pytest.fixture
def two_cycle():
    return two_cycle_mdp(0.2, 0.9)


def random_table(rng: np.random.Generator, n_states: int, n_actions: int) -> np.ndarray:
    logits = rng.standard_normal((n_states, n_actions))
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def z_scores(samples, target) -> np.ndarray:
    """|mean - target| in units of the standard error of the mean, per component"""
    samples = np.asarray(samples, dtype=float)
    se = samples.std(axis=0, ddof=1) / np.sqrt(samples.shape[0])
    return np.abs(samples.mean(axis=0) - target) / np.maximum(se, 1e-300)
