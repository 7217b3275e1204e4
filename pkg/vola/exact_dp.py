"""
Exact dynamic programming on TabularMdp.

Conventions: Q, V, X, W are unnormalized discounted sums; J, M and nu^2 are
normalized by (1 - gamma), so J = sum_s d(s) sum_a pi(a|s) R(s, a) with d the
normalized discounted occupancy. Policies are either (S, A) probability tables or
PolicyParams over the MDP's states.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve
import warnings

from .envs.tabular import TabularMdp
from .errors import NumericalError, UnsupportedConfiguration, ValidationError
from .policy import PolicyParams, observed_information, score_batch

logger = logging.getLogger(__name__)

DIRECT_SOLVE_LIMIT = 200
REFINEMENT_STEPS = 3

PolicyLike = Union[np.ndarray, PolicyParams]


@dataclass(frozen=True, eq=False)
class ValueTables:
    q: np.ndarray
    v: np.ndarray
    x: np.ndarray
    w: np.ndarray
    q_lambda: np.ndarray
    v_lambda: np.ndarray
    a_lambda: np.ndarray
    advantage: np.ndarray
    j: float
    lam: float


@dataclass(frozen=True, eq=False)
class Occupancy:
    d_mu: np.ndarray
    d_cond: np.ndarray
    t_step: Optional[np.ndarray] = None


@dataclass(frozen=True)
class PerfStats:
    """(J, nu^2, sigma^2, M, eta) for one policy and risk weight"""
    j: float
    nu2: float
    sigma2: float
    m2: float
    eta: float
    lam: float


@dataclass(frozen=True)
class SurrogateBound:
    l_lambda: float
    epsilon: float
    epsilon_max: float
    kl_max: float
    tv_max: float
    bound_rhs: float
    bound_rhs_max: float
    bound_rhs_tv: float


def state_features(mdp: TabularMdp) -> np.ndarray:
    return np.eye(mdp.n_states)


def as_table(mdp: TabularMdp, policy: PolicyLike, features: Optional[np.ndarray] = None) -> np.ndarray:
    """(S, A) action probabilities of a table or a softmax policy over the MDP's states"""
    if isinstance(policy, PolicyParams):
        feats = state_features(mdp) if features is None else features
        if policy.state_dim != feats.shape[1]:
            raise UnsupportedConfiguration(
                f"policy expects {policy.state_dim}-dim states; the MDP provides {feats.shape[1]}-dim features")
        table = policy.table(feats)
    else:
        table = np.asarray(policy, dtype=float)
    if table.shape != (mdp.n_states, mdp.n_actions):
        raise ValidationError(f"policy table must have shape {(mdp.n_states, mdp.n_actions)}, got {table.shape}")
    if np.any(table < 0) or np.max(np.abs(table.sum(axis=1) - 1.0)) > 1e-10:
        raise ValidationError("policy table rows must be probability distributions")
    return table


def transition_under(mdp: TabularMdp, table: np.ndarray) -> np.ndarray:
    """P_pi(s, s') = sum_a pi(a|s) P(s'|s, a)"""
    return np.einsum("sa,sat->st", table, mdp.transition)


def _solve(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """LU with partial pivoting; iterative refinement on larger systems"""
    with warnings.catch_warnings():
        warnings.simplefilter("error", LinAlgWarning)
        try:
            lu = lu_factor(matrix)
        except (LinAlgWarning, ValueError, np.linalg.LinAlgError) as e:
            raise NumericalError(f"singular Bellman system: {e}") from None
    x = lu_solve(lu, rhs)
    if matrix.shape[0] > DIRECT_SOLVE_LIMIT:
        for _ in range(REFINEMENT_STEPS):
            x = x + lu_solve(lu, rhs - matrix @ x)
    if not np.all(np.isfinite(x)):
        raise NumericalError("non-finite solution of a Bellman system")
    return x


def _bellman_solve(mdp: TabularMdp, table: np.ndarray, g: np.ndarray, discount: Optional[float] = None) -> np.ndarray:
    """f solving f = g + discount * P_pi f (g may carry trailing dimensions)"""
    discount = mdp.gamma if discount is None else discount
    a = np.eye(mdp.n_states) - discount * transition_under(mdp, table)
    return _solve(a, g)


def occupancy(mdp: TabularMdp, policy: PolicyLike, t_max: Optional[int] = None) -> Occupancy:
    """d_mu = (1 - gamma) mu^T (I - gamma P_pi)^-1 and the conditional occupancies d(s'|s)"""
    table = as_table(mdp, policy)
    p_pi = transition_under(mdp, table)
    a = np.eye(mdp.n_states) - mdp.gamma * p_pi
    d_cond = (1.0 - mdp.gamma) * _solve(a, np.eye(mdp.n_states))
    d_mu = (1.0 - mdp.gamma) * _solve(a.T, mdp.mu)
    t_step = None
    if t_max is not None:
        t_step = np.empty((t_max + 1, mdp.n_states, mdp.n_states))
        t_step[0] = np.eye(mdp.n_states)
        for t in range(1, t_max + 1):
            t_step[t] = t_step[t - 1] @ p_pi
    return Occupancy(d_mu, d_cond, t_step)


def solve_v(mdp: TabularMdp, policy: PolicyLike) -> np.ndarray:
    table = as_table(mdp, policy)
    return _bellman_solve(mdp, table, np.sum(table * mdp.reward, axis=1))


def solve_q(mdp: TabularMdp, policy: PolicyLike) -> np.ndarray:
    """Q(s, a) = R(s, a) + gamma sum_s' P(s'|s, a) V(s')"""
    v = solve_v(mdp, policy)
    return mdp.reward + mdp.gamma * mdp.transition @ v


def solve_x(mdp: TabularMdp, policy: PolicyLike, j: float) -> np.ndarray:
    """Action-volatility table: X = (R - j)^2 + gamma P W"""
    table = as_table(mdp, policy)
    dev = (mdp.reward - j) ** 2
    w = _bellman_solve(mdp, table, np.sum(table * dev, axis=1))
    return dev + mdp.gamma * mdp.transition @ w


def expected_return(mdp: TabularMdp, policy: PolicyLike) -> float:
    """Normalized J = (1 - gamma) mu^T V"""
    return float((1.0 - mdp.gamma) * mdp.mu @ solve_v(mdp, policy))


def return_moments(mdp: TabularMdp, policy: PolicyLike) -> Tuple[float, float]:
    """
    First and second moments of the discounted return G from mu.

    The second moment solves U(s, a) = R^2 + 2 gamma R E[V(s')] + gamma^2 E[U(s', a')],
    a linear system with discount gamma^2.
    """
    table = as_table(mdp, policy)
    v = solve_v(mdp, table)
    next_v = mdp.transition @ v
    g = np.sum(table * (mdp.reward ** 2 + 2.0 * mdp.gamma * mdp.reward * next_v), axis=1)
    u = _bellman_solve(mdp, table, g, discount=mdp.gamma ** 2)
    return float(mdp.mu @ v), float(mdp.mu @ u)


def perf_stats(mdp: TabularMdp, policy: PolicyLike, lam: float = 0.0) -> PerfStats:
    table = as_table(mdp, policy)
    d = occupancy(mdp, table).d_mu
    weights = d[:, None] * table
    j = float(np.sum(weights * mdp.reward))
    m2 = float(np.sum(weights * mdp.reward ** 2))
    nu2 = float(np.sum(weights * (mdp.reward - j) ** 2))
    first, second = return_moments(mdp, table)
    sigma2 = max(second - first ** 2, 0.0)
    return PerfStats(j=j, nu2=nu2, sigma2=sigma2, m2=m2, eta=j - lam * nu2, lam=lam)


def value_tables(mdp: TabularMdp, policy: PolicyLike, lam: float) -> ValueTables:
    table = as_table(mdp, policy)
    v = solve_v(mdp, table)
    q = mdp.reward + mdp.gamma * mdp.transition @ v
    j = float((1.0 - mdp.gamma) * mdp.mu @ v)
    dev = (mdp.reward - j) ** 2
    w = _bellman_solve(mdp, table, np.sum(table * dev, axis=1))
    x = dev + mdp.gamma * mdp.transition @ w
    q_lambda = q - lam * x
    v_lambda = v - lam * w
    # A^lambda = R - lam (R - J)^2 + gamma P V^lambda - V^lambda
    a_lambda = mdp.reward - lam * dev + mdp.gamma * mdp.transition @ v_lambda - v_lambda[:, None]
    return ValueTables(q=q, v=v, x=x, w=w, q_lambda=q_lambda, v_lambda=v_lambda,
                       a_lambda=a_lambda, advantage=q - v[:, None], j=j, lam=lam)


def advantage_lambda(mdp: TabularMdp, policy: PolicyLike, lam: float) -> np.ndarray:
    return value_tables(mdp, policy, lam).a_lambda


def perf_difference(mdp: TabularMdp, pi: PolicyLike, pi_tilde: PolicyLike, lam: float) -> Tuple[float, float]:
    """
    Both sides of the mean-volatility performance-difference identity.

    rhs = sum d_new pi_new A^lam_old + lam (sum d_new pi_new A_old)^2, where the
    squared term equals (J_new - J_old)^2.
    """
    old = as_table(mdp, pi)
    new = as_table(mdp, pi_tilde)
    lhs = perf_stats(mdp, new, lam).eta - perf_stats(mdp, old, lam).eta
    tables = value_tables(mdp, old, lam)
    weights = occupancy(mdp, new).d_mu[:, None] * new
    first = float(np.sum(weights * tables.a_lambda))
    drift = float(np.sum(weights * tables.advantage))
    return lhs, first + lam * drift ** 2


def delta_eta_approx(mdp: TabularMdp, pi: PolicyLike, pi_tilde: PolicyLike, lam: float) -> Tuple[float, float]:
    """(eta_new - eta_old, sum d_new pi_new A^lam_old); the first is never below the second"""
    old = as_table(mdp, pi)
    new = as_table(mdp, pi_tilde)
    lhs = perf_stats(mdp, new, lam).eta - perf_stats(mdp, old, lam).eta
    a_lambda = advantage_lambda(mdp, old, lam)
    return lhs, float(np.sum(occupancy(mdp, new).d_mu[:, None] * new * a_lambda))


def table_kl(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise KL(p || q) between (S, A) tables"""
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(p) - np.log(q)), 0.0)
    return np.sum(terms, axis=1)


def surrogate_and_bound(mdp: TabularMdp, pi: PolicyLike, pi_tilde: PolicyLike, lam: float) -> SurrogateBound:
    """
    Surrogate L^lam(pi_new) = eta_old + sum_s d_old(s) sum_a pi_new A^lam_old and its lower bounds.

    bound_rhs uses epsilon = max_s |sum_a pi_new A^lam| with the max KL; bound_rhs_max
    uses epsilon_max = max_{s,a} |A^lam| with the max KL; bound_rhs_tv uses epsilon with
    the max total-variation distance.
    """
    old = as_table(mdp, pi)
    new = as_table(mdp, pi_tilde)
    gamma = mdp.gamma
    eta = perf_stats(mdp, old, lam).eta
    a_lambda = advantage_lambda(mdp, old, lam)
    expected = np.sum(new * a_lambda, axis=1)
    d_old = occupancy(mdp, old).d_mu
    l_lambda = eta + float(d_old @ expected)
    epsilon = float(np.max(np.abs(expected)))
    epsilon_max = float(np.max(np.abs(a_lambda)))
    kl = float(np.max(table_kl(old, new)))
    tv = float(np.max(0.5 * np.sum(np.abs(old - new), axis=1)))
    coef = 2.0 * gamma / (1.0 - gamma)
    return SurrogateBound(
        l_lambda=l_lambda,
        epsilon=epsilon,
        epsilon_max=epsilon_max,
        kl_max=kl,
        tv_max=tv,
        bound_rhs=l_lambda - coef * epsilon * kl,
        bound_rhs_max=l_lambda - coef * epsilon_max * kl,
        bound_rhs_tv=l_lambda - coef * epsilon * tv,
    )


def solve_recursion(mdp: TabularMdp, policy: PolicyLike, g) -> Tuple[np.ndarray, np.ndarray]:
    """f = g + gamma P_pi f, by linear solve and by (1/(1-gamma)) sum_s' d(s'|s) g(s')"""
    table = as_table(mdp, policy)
    g = np.asarray(g, dtype=float)
    if not np.all(np.isfinite(g)):
        raise ValidationError("g must be finite")
    f = _bellman_solve(mdp, table, g)
    closed = occupancy(mdp, table).d_cond @ g / (1.0 - mdp.gamma)
    return f, closed


def _tabular_policy(mdp: TabularMdp, policy: PolicyParams, features: Optional[np.ndarray]) -> np.ndarray:
    if not isinstance(policy, PolicyParams) or not policy.is_softmax:
        raise UnsupportedConfiguration("exact gradients need a softmax_linear policy")
    if features is None:
        if policy.state_dim != mdp.n_states or policy.feature_map != "identity":
            raise UnsupportedConfiguration("exact gradients need one-hot state features (tabular parameterization)")
        features = state_features(mdp)
    return np.asarray(features, dtype=float)


def _score_tables(mdp: TabularMdp, policy: PolicyParams, features: np.ndarray) -> np.ndarray:
    """(S, A, m) scores for every state-action pair"""
    n_s, n_a = mdp.n_states, mdp.n_actions
    states = np.repeat(features[:, None, :], n_a, axis=1)
    actions = np.tile(np.arange(n_a), (n_s, 1))
    return score_batch(policy, states, actions)


def exact_gradient_eta(mdp: TabularMdp, policy: PolicyParams, lam: float,
                       features: Optional[np.ndarray] = None) -> np.ndarray:
    """grad eta = sum_s d(s) sum_a pi(a|s) score(s, a) Q^lam(s, a)"""
    features = _tabular_policy(mdp, policy, features)
    table = policy.table(features)
    tables = value_tables(mdp, table, lam)
    d = occupancy(mdp, table).d_mu
    scores = _score_tables(mdp, policy, features)
    return np.einsum("s,sa,sam,sa->m", d, table, scores, tables.q_lambda)


def _hessian_parts(mdp, table, d, scores, hlog, values, grad_values):
    """E_d,pi[(s s^T + H log pi) T + s grad T^T + grad T s^T] for a table T and its gradient"""
    outer = np.einsum("sam,san->samn", scores, scores) + hlog[:, None, :, :]
    first = np.einsum("sa,samn,sa->samn", table, outer, values)
    cross = np.einsum("sam,san->samn", scores, grad_values)
    cross = cross + np.swapaxes(cross, 2, 3)
    return np.einsum("s,sa,samn->mn", d, table, cross) + np.einsum("s,samn->mn", d, first)


def hessian_eta(mdp: TabularMdp, policy: PolicyParams, lam: float, method: str = "analytic",
                features: Optional[np.ndarray] = None, h: float = 1e-5) -> np.ndarray:
    """
    Hessian of eta = J - lam nu^2 for a softmax policy over tabular states.

    Analytic assembly differentiates the Bellman solves for V and W:
    H eta = E_d,pi[(s s^T + H log pi) Q^lam + s grad Q^lam^T + grad Q^lam s^T] - 2 lam grad J grad J^T,
    with grad X carrying the -2 (R - J) grad J term. method="fd" differentiates the
    exact gradient numerically instead.
    """
    features = _tabular_policy(mdp, policy, features)
    if method == "fd":
        def grad_at(theta):
            return exact_gradient_eta(mdp, policy.with_theta(theta), lam, features)
        hess = finite_diff_jacobian(grad_at, policy.theta, h)
        return 0.5 * (hess + hess.T)
    if method != "analytic":
        raise ValidationError(f"unknown hessian method {method!r}")

    gamma = mdp.gamma
    table = policy.table(features)
    tables = value_tables(mdp, table, lam)
    d = occupancy(mdp, table).d_mu
    scores = _score_tables(mdp, policy, features)
    hlog = -np.array([observed_information(policy, features[s]) for s in range(mdp.n_states)])

    g1 = np.einsum("sa,sam,sa->sm", table, scores, tables.q)
    grad_v = _bellman_solve(mdp, table, g1)
    grad_q = gamma * np.einsum("sat,tm->sam", mdp.transition, grad_v)
    grad_j = d @ g1

    dev = mdp.reward - tables.j
    g_w = np.einsum("sa,sam,sa->sm", table, scores, tables.x) - 2.0 * np.sum(table * dev, axis=1)[:, None] * grad_j
    grad_w = _bellman_solve(mdp, table, g_w)
    grad_x = -2.0 * dev[:, :, None] * grad_j + gamma * np.einsum("sat,tm->sam", mdp.transition, grad_w)

    hess_j = _hessian_parts(mdp, table, d, scores, hlog, tables.q, grad_q)
    hess_nu2 = _hessian_parts(mdp, table, d, scores, hlog, tables.x, grad_x) + 2.0 * np.outer(grad_j, grad_j)
    hess = hess_j - lam * hess_nu2
    return 0.5 * (hess + hess.T)


def truncated_stats(mdp: TabularMdp, policy: PolicyLike, horizon: int, lam: float = 0.0) -> PerfStats:
    """Finite-horizon analogues with the (1 - gamma)/(1 - gamma^T) normalization; sigma2 is the truncated return variance"""
    if horizon < 1:
        raise ValidationError(f"horizon must be >= 1, got {horizon}")
    table = as_table(mdp, policy)
    gamma = mdp.gamma
    norm = (1.0 - gamma) / (1.0 - gamma ** horizon) if gamma > 0 else 1.0
    p_pi = transition_under(mdp, table)
    rho = mdp.mu.copy()
    r_pi = np.sum(table * mdp.reward, axis=1)
    r2_pi = np.sum(table * mdp.reward ** 2, axis=1)
    j = m2 = 0.0
    for t in range(horizon):
        j += gamma ** t * float(rho @ r_pi)
        m2 += gamma ** t * float(rho @ r2_pi)
        rho = rho @ p_pi
    j *= norm
    m2 *= norm
    nu2 = max(m2 - j * j, 0.0)

    # Backward recursion for the first two moments of the truncated return.
    v = np.zeros(mdp.n_states)
    u = np.zeros(mdp.n_states)
    for _ in range(horizon):
        next_v = mdp.transition @ v
        next_u = mdp.transition @ u
        u = np.sum(table * (mdp.reward ** 2 + 2 * gamma * mdp.reward * next_v + gamma ** 2 * next_u), axis=1)
        v = np.sum(table * (mdp.reward + gamma * next_v), axis=1)
    sigma2 = max(float(mdp.mu @ u) - float(mdp.mu @ v) ** 2, 0.0)
    return PerfStats(j=j, nu2=nu2, sigma2=sigma2, m2=m2, eta=j - lam * nu2, lam=lam)


def truncated_gradient(mdp: TabularMdp, policy: PolicyParams, lam: float, horizon: int,
                       normalize_return: bool = False, features: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Expectation of the sampled reward-to-go gradient estimator with J frozen at J_T.

    The estimator weights score_t by gamma^t times the discounted sum of
    r~ = w R - lam c (R - J_T)^2 with c = (1 - gamma)/(1 - gamma^T), w = c when
    normalize_return else 1.
    """
    features = _tabular_policy(mdp, policy, features)
    table = policy.table(features)
    gamma = mdp.gamma
    norm = (1.0 - gamma) / (1.0 - gamma ** horizon) if gamma > 0 else 1.0
    j_t = truncated_stats(mdp, table, horizon).j
    shaped = (norm if normalize_return else 1.0) * mdp.reward - lam * norm * (mdp.reward - j_t) ** 2
    scores = _score_tables(mdp, policy, features)
    p_pi = transition_under(mdp, table)

    rhos = [mdp.mu.copy()]
    for _ in range(horizon - 1):
        rhos.append(rhos[-1] @ p_pi)
    grad = np.zeros(policy.m)
    v_next = np.zeros(mdp.n_states)
    for t in range(horizon - 1, -1, -1):
        q_t = shaped + gamma * mdp.transition @ v_next
        grad += gamma ** t * np.einsum("s,sa,sam,sa->m", rhos[t], table, scores, q_t)
        v_next = np.sum(table * q_t, axis=1)
    return grad


def finite_diff_jacobian(func: Callable[[np.ndarray], np.ndarray], theta: np.ndarray, h: float) -> np.ndarray:
    """Central-difference Jacobian of a vector function (columns index theta)"""
    theta = np.asarray(theta, dtype=float)
    cols = []
    for k in range(theta.size):
        step = np.zeros_like(theta)
        step[k] = h
        hi, lo = np.asarray(func(theta + step)), np.asarray(func(theta - step))
        if not (np.all(np.isfinite(hi)) and np.all(np.isfinite(lo))):
            raise NumericalError("non-finite value in finite-difference Jacobian")
        cols.append((hi - lo) / (2.0 * h))
    return np.stack(cols, axis=-1)
