import logging
from typing import Tuple

from ..envs.base import Environment
from ..errors import UnsupportedConfiguration
from ..policy import PolicyParams
from .config import TrainConfig, TrainLog
from .exp_utility import exp_utility_transform
from .trvo import trvo

logger = logging.getLogger(__name__)


def trpo_exp(env: Environment, policy0: PolicyParams, config: TrainConfig) -> Tuple[PolicyParams, TrainLog]:
    """Practical TRVO with lam = 0 on rewards transformed to (1 - exp(-c R)) / c"""
    if config.trust_region != "practical":
        raise UnsupportedConfiguration("trpo-exp runs the sampled trust-region update only")
    c = config.c
    logger.info("trpo-exp with c=%g", c)
    return trvo(env, policy0, config.with_(lam=0.0), reward_transform=lambda r: exp_utility_transform(r, c),
                algorithm="trpo-exp")
