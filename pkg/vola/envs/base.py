import logging
from abc import ABC, abstractmethod
from typing import Dict, NamedTuple, Optional

import numpy as np
from gymnasium import spaces

from ..errors import ContractViolation

logger = logging.getLogger(__name__)


class StepResult(NamedTuple):
    """Outcome of one environment step"""
    features: np.ndarray
    reward: float
    done: bool
    info: Dict


class Environment(ABC):
    """
    Sampling interface shared by tabular and financial environments.

    Subclasses declare `action_count`, `feature_dim`, `horizon` and `r_max`, and
    implement `_reset` / `_step`. The base class enforces the episode contract:
    no step after `done` until the next reset, and actions must belong to the
    declared action space.
    """

    action_count: int
    feature_dim: int
    horizon: int
    r_max: float

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self._done = True
        self._t = 0
        self.action_space = spaces.Discrete(self.action_count)
        self.observation_space = spaces.Box(low=-np.inf, high=np.inf, shape=(self.feature_dim,), dtype=np.float64)

    def reset(self, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        """Start a new episode and return the initial state features"""
        self._t = 0
        self._done = False
        return self._reset(rng if rng is not None else self._rng)

    def step(self, action: int, rng: Optional[np.random.Generator] = None) -> StepResult:
        """Apply an action index and advance one step"""
        if self._done:
            raise ContractViolation(f"{type(self).__name__}.step called after the episode ended; call reset() first")
        try:
            index = int(action)
        except (TypeError, ValueError):
            raise ContractViolation(f"action {action!r} is not an action index") from None
        if isinstance(action, (bool, np.bool_)) or index != action or not self.action_space.contains(index):
            raise ContractViolation(f"action {action!r} outside {{0..{self.action_count - 1}}}")
        result = self._step(index, rng if rng is not None else self._rng)
        self._t += 1
        done = result.done or self._t >= self.horizon
        self._done = done
        return StepResult(result.features, float(result.reward), done, result.info)

    @property
    def t(self) -> int:
        return self._t

    @abstractmethod
    def _reset(self, rng: np.random.Generator) -> np.ndarray:
        ...

    @abstractmethod
    def _step(self, action: int, rng: np.random.Generator) -> StepResult:
        ...
