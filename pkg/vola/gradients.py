"""Sampled mean-volatility policy gradients and finite-difference oracles."""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import NumericalError, ValidationError
from .numerics import compensated_sum
from .policy import PolicyParams, score_batch
from .sampling import Batch

logger = logging.getLogger(__name__)

FORMS = ("pgt", "gpomdp")


@dataclass(frozen=True, eq=False)
class GradEstimate:
    vector: np.ndarray
    n_used: int
    lam: float
    form: str
    j_used: float

    def __post_init__(self):
        if self.n_used < 1:
            raise ValidationError("a gradient estimate needs at least one trajectory")
        if not np.all(np.isfinite(self.vector)):
            raise NumericalError(f"non-finite {self.form} gradient estimate")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))


def batch_scores(batch: Batch, policy: PolicyParams) -> np.ndarray:
    """(N, T, m) scores; padded steps are zero"""
    if batch.features.shape[-1] != policy.state_dim:
        raise ValidationError(
            f"batch features have dimension {batch.features.shape[-1]}, policy expects {policy.state_dim}")
    scores = score_batch(policy, batch.features, batch.actions)
    return scores * batch.mask[..., None]


def shaped_rewards(batch: Batch, lam: float, j_hat: float, j_second: Optional[float] = None,
                   normalize_return: bool = False) -> np.ndarray:
    """
    R - lam c (R - J1)(R - J2) with c = (1 - gamma)/(1 - gamma^T).

    J2 defaults to J1 (single sampling). With normalize_return the R term is scaled by c as well.
    """
    c = batch.normalizer
    j2 = j_hat if j_second is None else j_second
    r = batch.rewards
    shaped = (c if normalize_return else 1.0) * r - lam * c * (r - j_hat) * (r - j2)
    return np.where(batch.mask, shaped, 0.0)


def reward_to_go(rewards: np.ndarray, gamma: float) -> np.ndarray:
    """G_t = sum_{t' >= t} gamma^(t' - t) r_t' along the last axis"""
    out = np.zeros_like(rewards, dtype=float)
    acc = np.zeros(rewards.shape[:-1])
    for t in range(rewards.shape[-1] - 1, -1, -1):
        acc = rewards[..., t] + gamma * acc
        out[..., t] = acc
    return out


def trajectory_gradients(batch: Batch, policy: PolicyParams, lam: float, j_hat: float,
                         j_second: Optional[float] = None, normalize_return: bool = False) -> np.ndarray:
    """Per-trajectory terms sum_t gamma^t G~_t score_t, shape (N, m)"""
    shaped = shaped_rewards(batch, lam, j_hat, j_second, normalize_return)
    weights = batch.discounts * reward_to_go(shaped, batch.gamma)
    return compensated_sum(batch_scores(batch, policy) * weights[..., None], axis=1)


def _mean_rows(rows: np.ndarray) -> np.ndarray:
    return compensated_sum(rows, axis=0) / rows.shape[0]


def grad_eta_pgt(batch: Batch, policy: PolicyParams, lam: float, j_hat: float,
                 j_second: Optional[float] = None, normalize_return: bool = False) -> GradEstimate:
    """(1/N) sum_i sum_t gamma^t G~_t score(s_t, a_t) over the shaped reward"""
    rows = trajectory_gradients(batch, policy, lam, j_hat, j_second, normalize_return)
    return GradEstimate(_mean_rows(rows), batch.n, lam, "pgt", j_hat)


def gpomdp_terms(batch: Batch, policy: PolicyParams, lam: float, j_hat: float, use_baseline: bool = True,
                 j_second: Optional[float] = None, normalize_return: bool = False) -> np.ndarray:
    """Per-trajectory GPOMDP terms sum_t (sum_{h<=t} score_h)(gamma^t r~_t - b_t), shape (N, m)"""
    shaped = shaped_rewards(batch, lam, j_hat, j_second, normalize_return)
    g = batch.discounts * shaped
    cum = np.cumsum(batch_scores(batch, policy), axis=1)
    if use_baseline:
        sq = cum ** 2
        num = compensated_sum(sq * g[..., None], axis=0)
        den = compensated_sum(sq, axis=0)
        # component-wise optimal baseline; 0 where the cumulative score vanishes on the whole batch
        baseline = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    else:
        baseline = np.zeros(cum.shape[1:])
    return compensated_sum(cum * (g[..., None] - baseline[None]), axis=1)


def grad_eta_gpomdp(batch: Batch, policy: PolicyParams, lam: float, j_hat: float, use_baseline: bool = True,
                    j_second: Optional[float] = None, normalize_return: bool = False) -> GradEstimate:
    rows = gpomdp_terms(batch, policy, lam, j_hat, use_baseline, j_second, normalize_return)
    return GradEstimate(_mean_rows(rows), batch.n, lam, "gpomdp", j_hat)


def estimate_gradient(form: str, batch: Batch, policy: PolicyParams, lam: float, j_hat: float,
                      use_baseline: bool = True, normalize_return: bool = False) -> GradEstimate:
    if form == "pgt":
        return grad_eta_pgt(batch, policy, lam, j_hat, normalize_return=normalize_return)
    if form == "gpomdp":
        return grad_eta_gpomdp(batch, policy, lam, j_hat, use_baseline, normalize_return=normalize_return)
    raise ValidationError(f"unknown gradient estimator {form!r}; expected one of {FORMS}")


def finite_diff_grad(objective: Callable[[np.ndarray], float], theta, h: float) -> np.ndarray:
    """Central differences per coordinate"""
    if not h > 0:
        raise ValidationError(f"finite-difference step must be positive, got {h}")
    theta = np.asarray(theta, dtype=float)
    grad = np.zeros_like(theta)
    for k in range(theta.size):
        step = np.zeros_like(theta)
        step.flat[k] = h
        hi, lo = float(objective(theta + step)), float(objective(theta - step))
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NumericalError(f"objective is not finite around coordinate {k}")
        grad.flat[k] = (hi - lo) / (2.0 * h)
    return grad


def finite_diff_hessian(objective: Callable[[np.ndarray], float], theta, h: float) -> np.ndarray:
    """Symmetric central-difference Hessian of a scalar objective"""
    if not h > 0:
        raise ValidationError(f"finite-difference step must be positive, got {h}")
    theta = np.asarray(theta, dtype=float)
    m = theta.size
    hess = np.zeros((m, m))
    for i in range(m):
        ei = np.zeros(m)
        ei[i] = h
        for j in range(i, m):
            ej = np.zeros(m)
            ej[j] = h
            values = [objective(theta + ei + ej), objective(theta + ei - ej),
                      objective(theta - ei + ej), objective(theta - ei - ej)]
            if not np.all(np.isfinite(values)):
                raise NumericalError("objective is not finite in the finite-difference stencil")
            hess[i, j] = hess[j, i] = (values[0] - values[1] - values[2] + values[3]) / (4.0 * h * h)
    return hess
