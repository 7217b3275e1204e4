"""Exponential-utility reward transform and its mean-volatility approximation check."""

import logging
import warnings
from typing import Iterable

import numpy as np
import pandas as pd

from .. import exact_dp
from ..envs.tabular import TabularMdp
from ..errors import ValidationError

logger = logging.getLogger(__name__)

# exp(x) overflows float64 above this exponent
MAX_EXPONENT = float(np.log(np.finfo(float).max))


def exp_utility_transform(r, c: float):
    """(1 - exp(-c r)) / c, evaluated as -expm1(-c r)/c; saturates where exp(-c r) would overflow"""
    if not c > 0:
        raise ValidationError(f"exponential-utility coefficient c must be > 0, got {c}")
    r_arr = np.asarray(r, dtype=float)
    exponent = -c * r_arr
    saturated = exponent > MAX_EXPONENT
    if np.any(saturated):
        msg = (f"exponential utility saturated for {int(np.sum(saturated))} reward(s) at c={c}; "
               f"clamping exponent to {MAX_EXPONENT:.3f}")
        logger.warning(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        exponent = np.minimum(exponent, MAX_EXPONENT)
    out = -np.expm1(exponent) / c
    return float(out) if np.ndim(r) == 0 else out


def reward_cumulants(mdp: TabularMdp, policy) -> dict:
    """Mean and second to fourth cumulants of R(s, a) under s ~ d, a ~ pi"""
    table = exact_dp.as_table(mdp, policy)
    weights = exact_dp.occupancy(mdp, table).d_mu[:, None] * table
    mean = float(np.sum(weights * mdp.reward))
    dev = mdp.reward - mean
    mu2, mu3, mu4 = (float(np.sum(weights * dev ** p)) for p in (2, 3, 4))
    return {"mean": mean, "kappa2": mu2, "kappa3": mu3, "kappa4": mu4 - 3.0 * mu2 * mu2}


def check_exp_utility_approx(mdp: TabularMdp, policy, c_list: Iterable[float]) -> pd.DataFrame:
    """
    Both sides of -(1/c) log E_{d,pi}[exp(-c R)] ~ J - (c/2)(M - J^2), per c.

    The residual's leading terms are c^2 kappa3/6 - c^3 kappa4/24, reported as
    `predicted_gap` next to the measured gap.
    """
    table = exact_dp.as_table(mdp, policy)
    stats = exact_dp.perf_stats(mdp, table)
    cumulants = reward_cumulants(mdp, table)
    weights = exact_dp.occupancy(mdp, table).d_mu[:, None] * table
    rows = []
    for c in c_list:
        if not c > 0:
            raise ValidationError(f"exponential-utility coefficient c must be > 0, got {c}")
        lhs = -float(np.log1p(np.sum(weights * np.expm1(-c * mdp.reward)))) / c
        rhs = stats.j - 0.5 * c * (stats.m2 - stats.j ** 2)
        rows.append({
            "c": c,
            "lhs": lhs,
            "rhs": rhs,
            "gap": lhs - rhs,
            "predicted_gap": c * c * cumulants["kappa3"] / 6.0 - c ** 3 * cumulants["kappa4"] / 24.0,
            "kappa3": cumulants["kappa3"],
            "kappa4": cumulants["kappa4"],
            "nu2": stats.nu2,
            "m2_minus_j2": stats.m2 - stats.j ** 2,
        })
    return pd.DataFrame(rows)
