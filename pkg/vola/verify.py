"""
Numerical checks of the identities and bounds the library relies on.

Every suite returns a SuiteResult row for the verify report. Exact suites
compare against a tolerance; statistical suites report the largest |z| score
and pass when it stays below four standard errors. Gating suites decide the
exit status of `verify`; informational rows are reported only.
"""

import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd
from omegaconf import DictConfig, OmegaConf

from . import exact_dp
from .envs.tabular import TabularEnv, TabularMdp, build_random_tabular, deterministic_table, two_cycle_mdp
from .errors import ValidationError
from .gradients import finite_diff_grad, grad_eta_pgt
from .numerics import f_cdf, f_quantile, regularized_incomplete_beta, spectral_norm
from .optimizers.config import TrainConfig
from .optimizers.exp_utility import check_exp_utility_approx
from .optimizers.mean_variance import mean_variance_pg
from .optimizers.safe import SafeConfig, c_bound, exact_meta_params, l_bound, safe_vola_pg
from .optimizers.trvo import trvo
from .optimizers.vola_pg import vola_pg
from .policy import smoothing_constants, softmax_policy
from .sampling import (collect, collect_triple, estimate_j, single_sample_volatility,
                       triple_sample_volatility)

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ("theorem_id", "instances", "max_violation", "tolerance", "pass", "gating", "skipped", "offending")
Z_LIMIT = 4.0


@dataclass(frozen=True)
class VerifyConfig:
    corpus_size: int = 50
    seed: int = 0
    max_states: int = 20
    max_actions: int = 4
    gammas: Tuple[float, ...] = (0.5, 0.9, 0.99)
    lam: float = 0.5
    r_max: float = 1.0
    pairs: int = 100
    kl_cap: float = 0.1
    fd_instances: int = 20
    stat_mdps: int = 3
    replications: int = 500
    batch_size: int = 100
    horizon: int = 30
    j_replications: int = 2000
    safe_runs: int = 100
    safe_iterations: int = 3
    safe_delta: float = 0.1
    ascent_steps: int = 50
    ascent_instances: int = 3
    exp_c: Tuple[float, float] = (0.01, 0.005)
    statistical: bool = True
    training: bool = True

    def __post_init__(self):
        for name in ("corpus_size", "max_states", "max_actions", "pairs", "fd_instances", "stat_mdps",
                     "replications", "batch_size", "horizon", "j_replications", "safe_runs", "safe_iterations",
                     "ascent_steps", "ascent_instances"):
            if getattr(self, name) < 1:
                raise ValidationError(f"verify.{name} must be >= 1, got {getattr(self, name)}")
        if self.max_states < 2 or self.max_actions < 2:
            raise ValidationError("verify.max_states and verify.max_actions must be >= 2")
        if not all(0.0 <= g < 1.0 for g in self.gammas):
            raise ValidationError(f"verify.gammas must lie in [0, 1), got {self.gammas}")

    @classmethod
    def from_cfg(cls, cfg, **overrides) -> "VerifyConfig":
        data = OmegaConf.to_container(cfg, resolve=True) if isinstance(cfg, DictConfig) else dict(cfg or {})
        data.update(overrides)
        for key in ("gammas", "exp_c"):
            if key in data:
                data[key] = tuple(data[key])
        try:
            return cls(**data)
        except TypeError as e:
            raise ValidationError(f"bad verify configuration: {e}") from None


@dataclass
class SuiteResult:
    theorem_id: str
    instances: int
    max_violation: float
    tolerance: float
    passed: bool
    gating: bool = True
    offending: List[Dict] = field(default_factory=list)
    skipped: int = 0

    def row(self) -> Dict:
        return {
            "theorem_id": self.theorem_id,
            "instances": self.instances,
            "max_violation": self.max_violation,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "gating": self.gating,
            "skipped": self.skipped,
            "offending": json.dumps(self.offending[:5], sort_keys=True) if self.offending else "",
        }


def _result(theorem_id: str, violations: List[float], tolerance: float, offending: List[Dict],
            gating: bool = True, skipped: int = 0) -> SuiteResult:
    worst = float(max(violations)) if violations else 0.0
    return SuiteResult(theorem_id, len(violations), worst, tolerance, worst <= tolerance, gating, offending, skipped)


def _z_score(samples: np.ndarray, target) -> np.ndarray:
    samples = np.asarray(samples, dtype=float)
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / math.sqrt(samples.shape[0])
    diff = np.abs(mean - np.asarray(target, dtype=float))
    return np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.where(diff > 1e-12, np.inf, 0.0))


def corpus(cfg: VerifyConfig, size: Optional[int] = None, max_states: Optional[int] = None) -> List[TabularMdp]:
    """Random MDPs with seeds cfg.seed .. cfg.seed + size - 1, cycling through cfg.gammas"""
    size = cfg.corpus_size if size is None else size
    max_states = cfg.max_states if max_states is None else max_states
    mdps = []
    for i in range(size):
        seed = cfg.seed + i
        rng = np.random.default_rng((seed, 1))
        n_states = int(rng.integers(2, max_states + 1))
        n_actions = int(rng.integers(2, cfg.max_actions + 1))
        mdps.append(build_random_tabular(seed, n_states, n_actions, cfg.gammas[i % len(cfg.gammas)], cfg.r_max))
    return mdps


def random_logits(rng: np.random.Generator, mdp: TabularMdp, scale: float = 1.0) -> np.ndarray:
    return scale * rng.standard_normal((mdp.n_states, mdp.n_actions))


def softmax_table(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def nearby_pair(rng: np.random.Generator, mdp: TabularMdp, kl_cap: float) -> Tuple[np.ndarray, np.ndarray]:
    logits = random_logits(rng, mdp)
    noise = rng.standard_normal(logits.shape)
    pi = softmax_table(logits)
    scale = 1.0
    while True:
        pi_tilde = softmax_table(logits + scale * noise)
        if np.max(exact_dp.table_kl(pi, pi_tilde)) <= kl_cap:
            return pi, pi_tilde
        scale *= 0.5


def _describe(mdp: TabularMdp, **extra) -> Dict:
    return {"mdp": mdp.name, "states": mdp.n_states, "actions": mdp.n_actions, "gamma": mdp.gamma, **extra}


def check_variance_inequality(cfg: VerifyConfig) -> SuiteResult:
    """sigma^2 <= nu^2 / (1 - gamma)^2"""
    rng = np.random.default_rng((cfg.seed, 101))
    violations, offending = [], []
    for mdp in corpus(cfg, size=max(cfg.corpus_size, 100)):
        stats = exact_dp.perf_stats(mdp, softmax_table(random_logits(rng, mdp)))
        bound = stats.nu2 / (1.0 - mdp.gamma) ** 2
        v = max(stats.sigma2 - bound, 0.0) / max(1.0, bound)
        violations.append(v)
        if v > 1e-9:
            offending.append(_describe(mdp, sigma2=stats.sigma2, bound=bound))
    return _result("variance_inequality", violations, 1e-9, offending)


def check_volatility_identities(cfg: VerifyConfig) -> SuiteResult:
    """nu^2 = M - J^2 and nu^2 = (1 - gamma) mu.W"""
    rng = np.random.default_rng((cfg.seed, 102))
    violations, offending = [], []
    for mdp in corpus(cfg):
        table = softmax_table(random_logits(rng, mdp))
        stats = exact_dp.perf_stats(mdp, table)
        tables = exact_dp.value_tables(mdp, table, 0.0)
        scale = max(1.0, stats.m2)
        v = max(abs(stats.nu2 - (stats.m2 - stats.j ** 2)),
                abs(stats.nu2 - (1.0 - mdp.gamma) * float(mdp.mu @ tables.w))) / scale
        violations.append(v)
        if v > 1e-10:
            offending.append(_describe(mdp, nu2=stats.nu2, m2=stats.m2, j=stats.j))
    return _result("volatility_identity", violations, 1e-10, offending)


def check_bellman(cfg: VerifyConfig) -> SuiteResult:
    """Bellman residuals, occupancy normalization, advantage centering and the recursion identity"""
    rng = np.random.default_rng((cfg.seed, 103))
    violations, offending = [], []
    for mdp in corpus(cfg):
        table = softmax_table(random_logits(rng, mdp))
        t = exact_dp.value_tables(mdp, table, cfg.lam)
        occ = exact_dp.occupancy(mdp, table)
        residuals = [
            np.max(np.abs(t.q - (mdp.reward + mdp.gamma * mdp.transition @ np.sum(table * t.q, axis=1)))),
            np.max(np.abs(t.x - ((mdp.reward - t.j) ** 2 + mdp.gamma * mdp.transition @ t.w))),
            np.max(np.abs(np.sum(table * t.a_lambda, axis=1))),
            abs(occ.d_mu.sum() - 1.0),
            max(0.0, -float(occ.d_mu.min())),
            np.max(np.abs(occ.d_cond.sum(axis=1) - 1.0)),
        ]
        f, closed = exact_dp.solve_recursion(mdp, table, rng.standard_normal(mdp.n_states))
        residuals.append(np.max(np.abs(f - closed)) / max(1.0, float(np.max(np.abs(f)))))
        v = float(max(residuals))
        violations.append(v)
        if v > 1e-10:
            offending.append(_describe(mdp, residuals=[float(r) for r in residuals]))
    return _result("bellman_and_recursion", violations, 1e-10, offending)


def check_performance_difference(cfg: VerifyConfig) -> List[SuiteResult]:
    """Performance-difference identity and the first-order lower estimate"""
    rng = np.random.default_rng((cfg.seed, 104))
    mdps = corpus(cfg, size=cfg.pairs, max_states=min(cfg.max_states, 10))
    eq_viol, eq_bad, ineq_viol, ineq_bad = [], [], [], []
    for mdp in mdps:
        pi = softmax_table(random_logits(rng, mdp))
        pi_tilde = softmax_table(random_logits(rng, mdp))
        lam = float(rng.uniform(0.0, 2.0))
        lhs, rhs = exact_dp.perf_difference(mdp, pi, pi_tilde, lam)
        v = abs(lhs - rhs)
        eq_viol.append(v)
        if v > 1e-8:
            eq_bad.append(_describe(mdp, lam=lam, lhs=lhs, rhs=rhs))
        lhs2, approx = exact_dp.delta_eta_approx(mdp, pi, pi_tilde, lam)
        v2 = max(approx - lhs2, 0.0)
        ineq_viol.append(v2)
        if v2 > 1e-10:
            ineq_bad.append(_describe(mdp, lam=lam, delta_eta=lhs2, approx=approx))
    return [_result("performance_difference", eq_viol, 1e-8, eq_bad),
            _result("delta_eta_lower_estimate", ineq_viol, 1e-10, ineq_bad)]


def check_surrogate_bounds(cfg: VerifyConfig) -> List[SuiteResult]:
    """eta(pi_new) against the surrogate lower bounds on nearby policy pairs"""
    rng = np.random.default_rng((cfg.seed, 105))
    mdps = corpus(cfg, size=cfg.pairs, max_states=min(cfg.max_states, 10))
    rows = {"max": ([], []), "tv": ([], []), "state": ([], [])}
    for mdp in mdps:
        pi, pi_tilde = nearby_pair(rng, mdp, cfg.kl_cap)
        lam = float(rng.uniform(0.0, 2.0))
        eta_new = exact_dp.perf_stats(mdp, pi_tilde, lam).eta
        b = exact_dp.surrogate_and_bound(mdp, pi, pi_tilde, lam)
        for key, rhs in (("max", b.bound_rhs_max), ("tv", b.bound_rhs_tv), ("state", b.bound_rhs)):
            v = max(rhs - eta_new, 0.0)
            rows[key][0].append(v)
            if v > 1e-10:
                rows[key][1].append(_describe(mdp, lam=lam, eta_new=eta_new, bound=rhs, kl_max=b.kl_max,
                                              pi=pi.tolist(), pi_tilde=pi_tilde.tolist()))
    return [_result("surrogate_bound_eps_max", rows["max"][0], 1e-10, rows["max"][1]),
            _result("surrogate_bound_tv", rows["tv"][0], 1e-10, rows["tv"][1]),
            _result("surrogate_bound_state_eps", rows["state"][0], 1e-10, rows["state"][1], gating=False)]


def _exact_eta(mdp: TabularMdp, policy, lam: float) -> Callable[[np.ndarray], float]:
    def eta(theta):
        return exact_dp.perf_stats(mdp, policy.with_theta(theta).table(np.eye(mdp.n_states)), lam).eta
    return eta


def check_gradients(cfg: VerifyConfig) -> List[SuiteResult]:
    """Exact gradient and Hessian of eta against finite differences"""
    rng = np.random.default_rng((cfg.seed, 106))
    mdps = corpus(cfg, size=cfg.fd_instances, max_states=min(cfg.max_states, 8))
    g_viol, g_bad, h_viol, h_bad = [], [], [], []
    for mdp in mdps:
        policy = softmax_policy(mdp.n_actions, mdp.n_states, rng.standard_normal(mdp.n_states * mdp.n_actions))
        grad = exact_dp.exact_gradient_eta(mdp, policy, cfg.lam)
        fd = finite_diff_grad(_exact_eta(mdp, policy, cfg.lam), policy.theta, 1e-5)
        v = float(np.linalg.norm(grad - fd)) / max(float(np.linalg.norm(fd)), 1.0)
        g_viol.append(v)
        if v > 1e-5:
            g_bad.append(_describe(mdp, error=v))
        hess = exact_dp.hessian_eta(mdp, policy, cfg.lam)
        hess_fd = exact_dp.hessian_eta(mdp, policy, cfg.lam, method="fd")
        vh = float(np.max(np.abs(hess - hess_fd))) / max(float(np.max(np.abs(hess_fd))), 1.0)
        vh = max(vh, float(np.max(np.abs(hess - hess.T))) * 1e4)
        h_viol.append(vh)
        if vh > 1e-4:
            h_bad.append(_describe(mdp, error=vh))
    return [_result("gradient_fd", g_viol, 1e-5, g_bad),
            _result("hessian_fd", h_viol, 1e-4, h_bad)]


def check_hessian_bound(cfg: VerifyConfig) -> SuiteResult:
    """Spectral norm of the exact Hessian against the smoothing-constant bound L"""
    rng = np.random.default_rng((cfg.seed, 107))
    violations, offending = [], []
    for mdp in corpus(cfg, size=cfg.fd_instances, max_states=min(cfg.max_states, 8)):
        policy = softmax_policy(mdp.n_actions, mdp.n_states, rng.standard_normal(mdp.n_states * mdp.n_actions))
        features = np.eye(mdp.n_states)
        hess = exact_dp.hessian_eta(mdp, policy, cfg.lam)
        norm = float(np.linalg.norm(hess, 2))
        j = exact_dp.perf_stats(mdp, policy.table(features)).j
        smoothing = smoothing_constants(policy, features, uniform=True)
        bound = l_bound(smoothing, c_bound(mdp.r_max, cfg.lam, j), mdp.r_max, mdp.gamma, cfg.lam)
        v = max(norm - bound, 0.0) / bound
        violations.append(v)
        if v > 0:
            offending.append(_describe(mdp, hessian_norm=norm, l_bound=bound))
    return _result("hessian_norm_bound", violations, 0.0, offending)


def check_safe_exact_ascent(cfg: VerifyConfig) -> SuiteResult:
    """Exact ascent with alpha = 1/(2L) gains at least |grad|^2 / (4L) per step"""
    rng = np.random.default_rng((cfg.seed, 108))
    violations, offending = [], []
    for mdp in corpus(cfg, size=cfg.ascent_instances, max_states=min(cfg.max_states, 6)):
        policy = softmax_policy(mdp.n_actions, mdp.n_states, rng.standard_normal(mdp.n_states * mdp.n_actions))
        features = np.eye(mdp.n_states)
        smoothing = smoothing_constants(policy, features, uniform=True)
        eta = exact_dp.perf_stats(mdp, policy.table(features), cfg.lam).eta
        for step in range(cfg.ascent_steps):
            grad = exact_dp.exact_gradient_eta(mdp, policy, cfg.lam)
            params = exact_meta_params(smoothing, mdp.r_max, mdp.gamma, cfg.lam, None, grad)
            policy = policy.with_theta(policy.theta + params.alpha_star * grad)
            new_eta = exact_dp.perf_stats(mdp, policy.table(features), cfg.lam).eta
            guaranteed = params.grad_norm ** 2 / (4.0 * params.l_bound)
            v = max(guaranteed - (new_eta - eta), 0.0) / max(guaranteed, 1e-300) if guaranteed > 1e-13 else 0.0
            violations.append(v)
            if v > 1e-6:
                offending.append(_describe(mdp, step=step, realized=new_eta - eta, guaranteed=guaranteed))
            eta = new_eta
    return _result("safe_exact_ascent", violations, 1e-6, offending)


def check_exp_utility(cfg: VerifyConfig) -> SuiteResult:
    """Gap between the exponential-utility value and J - (c/2) nu^2 shrinks super-linearly"""
    rng = np.random.default_rng((cfg.seed, 109))
    c_hi, c_lo = cfg.exp_c
    violations, offending = [], []
    skipped = 0
    for mdp in corpus(cfg):
        table = softmax_table(random_logits(rng, mdp))
        report = check_exp_utility_approx(mdp, table, [c_hi, c_lo])
        k3, k4 = report["kappa3"].iloc[0], report["kappa4"].iloc[0]
        # only instances whose third cumulant dominates the next residual term are scored
        if abs(k3 / 6.0) < 10.0 * c_hi * abs(k4) / 24.0:
            skipped += 1
            continue
        gap_hi, gap_lo = report["gap"].iloc[0], report["gap"].iloc[1]
        ratio = gap_hi / gap_lo if gap_lo != 0 else math.inf
        v = 0.0 if 2.5 <= ratio <= 8.0 else min(abs(ratio - 2.5), abs(ratio - 8.0))
        violations.append(v)
        if v > 0:
            offending.append(_describe(mdp, ratio=ratio, kappa3=k3, kappa4=k4))
    if skipped:
        logger.info("exp_utility_scaling: %d of %d instances skipped (fourth cumulant not dominated)", skipped,
                    skipped + len(violations))
    return _result("exp_utility_scaling", violations, 0.0, offending, skipped=skipped)


def check_two_cycle_ratio(cfg: VerifyConfig) -> SuiteResult:
    violations, offending = [], []
    for gamma in cfg.gammas:
        if gamma == 0.0:
            continue
        mdp = two_cycle_mdp(0.0, gamma)
        nu_a = exact_dp.perf_stats(mdp, deterministic_table(5, 2, 0)).nu2
        nu_b = exact_dp.perf_stats(mdp, deterministic_table(5, 2, 1)).nu2
        v = abs(nu_b / nu_a - 100.0)
        violations.append(v)
        if v > 1e-9:
            offending.append({"gamma": gamma, "nu2_a": nu_a, "nu2_b": nu_b})
    return _result("two_cycle_volatility_ratio", violations, 1e-9, offending)


def two_cycle_start(stay_logit: float = 12.0):
    """Softmax policy on the two-cycle MDP: uniform at s0, staying in the current cycle elsewhere"""
    theta = np.zeros((2, 5))
    theta[0, [1, 2]] = stay_logit
    theta[1, [3, 4]] = stay_logit
    return softmax_policy(2, 5, theta.ravel())


def check_two_cycle_training(cfg: VerifyConfig) -> SuiteResult:
    """Mean-variance picks cycle b; volatility-averse gradient ascent with lam=5 picks cycle a"""
    env = TabularEnv(two_cycle_mdp(0.2, 0.9), horizon=50)
    violations, offending = [], []
    runs = [("mean-variance", lam, 1, mean_variance_pg, 1.0) for lam in (0.1, 1.0)]
    runs.append(("vola-pg", 5.0, 0, vola_pg, 0.1))
    for name, lam, expected, algo, alpha in runs:
        config = TrainConfig(lam=lam, gamma=0.9, iterations=150, alpha=alpha, gradient="exact", seed=cfg.seed)
        policy, _ = algo(env, two_cycle_start(), config)
        p = float(policy.table(env.state_features())[0, expected])
        v = max(0.9 - p, 0.0)
        violations.append(v)
        if v > 0:
            offending.append({"algorithm": name, "lam": lam, "p_expected_action": p})
    return _result("two_cycle_discrimination", violations, 0.0, offending)


def check_trvo_monotone(cfg: VerifyConfig) -> SuiteResult:
    """Penalty-mode TRVO never decreases the exact objective"""
    violations, offending = [], []
    env = TabularEnv(two_cycle_mdp(0.2, 0.9), horizon=50)
    for lam in (0.0, 0.5, 5.0):
        config = TrainConfig(lam=lam, gamma=0.9, iterations=20, trust_region="penalty", seed=cfg.seed)
        _, log = trvo(env, two_cycle_start(stay_logit=2.0), config)
        eta = np.array(log.column("eta_hat"))
        drops = np.maximum(eta[:-1] - eta[1:], 0.0)
        v = float(drops.max()) if drops.size else 0.0
        violations.append(v)
        if v > 1e-10:
            offending.append({"lam": lam, "eta": eta.tolist()})
    return _result("trvo_penalty_monotone", violations, 1e-10, offending)


def _stat_env(mdp: TabularMdp, horizon: int) -> TabularEnv:
    return TabularEnv(mdp, horizon)


def check_estimators(cfg: VerifyConfig) -> List[SuiteResult]:
    """J_hat and triple-sampled volatility unbiased; single-sampling bias equals -Var(J_hat)"""
    mdps = corpus(cfg, size=cfg.stat_mdps, max_states=4)
    rng = np.random.default_rng((cfg.seed, 110))
    j_z, v_z, b_z, bad = [], [], [], []
    for idx, mdp in enumerate(mdps):
        env = _stat_env(mdp, cfg.horizon)
        policy = softmax_policy(mdp.n_actions, mdp.n_states, rng.standard_normal(mdp.n_states * mdp.n_actions))
        truth = exact_dp.truncated_stats(mdp, policy.table(env.state_features()), cfg.horizon)
        master = np.random.SeedSequence((cfg.seed, 110, idx))
        seeds = master.spawn(cfg.j_replications)
        j_hats, triples, bias_terms = [], [], []
        for seq in seeds:
            d1, d2, d3 = collect_triple(env, policy, 1, cfg.horizon, seq)
            j_hats.append(estimate_j(d3))
            triples.append(triple_sample_volatility(d1, d2, d3))
            j3 = estimate_j(d3)
            bias_terms.append(single_sample_volatility(d3) - truth.nu2 + (j3 - truth.j) ** 2)
        zs = (float(_z_score(j_hats, truth.j)), float(_z_score(triples, truth.nu2)), float(_z_score(bias_terms, 0.0)))
        j_z.append(zs[0])
        v_z.append(zs[1])
        b_z.append(zs[2])
        if max(zs) > Z_LIMIT:
            bad.append(_describe(mdp, z_j=zs[0], z_triple=zs[1], z_single_bias=zs[2]))
    return [_result("j_hat_unbiased", j_z, Z_LIMIT, bad),
            _result("triple_sampling", v_z, Z_LIMIT, bad),
            _result("single_sampling_bias", b_z, Z_LIMIT, bad)]


def check_sampled_gradient(cfg: VerifyConfig) -> SuiteResult:
    """Replication mean of the PGT estimator against the exact truncated-horizon gradient"""
    mdps = corpus(cfg, size=cfg.stat_mdps, max_states=4)
    rng = np.random.default_rng((cfg.seed, 111))
    zs, bad = [], []
    for idx, mdp in enumerate(mdps):
        env = _stat_env(mdp, cfg.horizon)
        policy = softmax_policy(mdp.n_actions, mdp.n_states, rng.standard_normal(mdp.n_states * mdp.n_actions))
        for lam in (0.0, cfg.lam):
            target = exact_dp.truncated_gradient(mdp, policy, lam, cfg.horizon)
            estimates = []
            for seq in np.random.SeedSequence((cfg.seed, 111, idx)).spawn(cfg.replications):
                centers, batch = seq.spawn(2)
                if lam == 0.0:
                    b = collect(env, policy, cfg.batch_size, cfg.horizon, batch)
                    estimates.append(grad_eta_pgt(b, policy, 0.0, estimate_j(b)).vector)
                else:
                    c1, c2 = collect_triple(env, policy, cfg.batch_size, cfg.horizon, centers)[:2]
                    b = collect(env, policy, cfg.batch_size, cfg.horizon, batch)
                    estimates.append(grad_eta_pgt(b, policy, lam, estimate_j(c1), estimate_j(c2)).vector)
            z = float(np.max(_z_score(np.array(estimates), target)))
            zs.append(z)
            if z > Z_LIMIT:
                bad.append(_describe(mdp, lam=lam, z=z))
    return _result("sampled_gradient", zs, Z_LIMIT, bad)


def check_safe_sampled(cfg: VerifyConfig) -> SuiteResult:
    """Fraction of safe-update iterations whose realized gain misses |g|^2/(8L)"""
    mdp = build_random_tabular(cfg.seed, 2, 2, 0.5, cfg.r_max)
    env = TabularEnv(mdp, horizon=cfg.horizon)
    safe = SafeConfig(delta=cfg.safe_delta, max_batch=200_000)
    misses, total = 0, 0
    for run in range(cfg.safe_runs):
        config = TrainConfig(lam=0.1, gamma=mdp.gamma, horizon=cfg.horizon, batch_size=20,
                             iterations=cfg.safe_iterations, seed=cfg.seed * 100_003 + run)
        _, log = safe_vola_pg(env, softmax_policy(2, 2), config, safe)
        for realized, guaranteed in zip(log.column("realized_improvement"), log.column("guaranteed_improvement")):
            total += 1
            if realized < guaranteed - 1e-14:
                misses += 1
    delta = cfg.safe_delta
    tolerance = delta + 3.0 * math.sqrt(delta * (1.0 - delta) / cfg.safe_runs)
    fraction = misses / total if total else 0.0
    offending = [{"misses": misses, "iterations": total}] if fraction > tolerance else []
    return SuiteResult("safe_sampled_improvement", total, fraction, tolerance, fraction <= tolerance, True, offending)


def check_numerics(cfg: VerifyConfig) -> List[SuiteResult]:
    rng = np.random.default_rng((cfg.seed, 112))
    rt = []
    for p in (0.01, 0.5, 0.99):
        rt.append(abs(f_cdf(f_quantile(p, 3, 40), 3, 40) - p))
    sym = []
    for _ in range(50):
        x, a, b = rng.uniform(0.01, 0.99), rng.uniform(0.5, 20), rng.uniform(0.5, 20)
        sym.append(abs(regularized_incomplete_beta(x, a, b) + regularized_incomplete_beta(1 - x, b, a) - 1.0))
    spec = []
    for _ in range(20):
        a = rng.standard_normal((10, 10))
        psd = a @ a.T
        dense = float(np.max(np.linalg.eigvalsh(psd)))
        spec.append(abs(spectral_norm(psd) - dense) / dense)
    return [_result("f_quantile_round_trip", rt, 1e-8, []),
            _result("incomplete_beta_symmetry", sym, 1e-12, []),
            _result("spectral_norm_power_iteration", spec, 1e-8, [])]


def run_suites(cfg: VerifyConfig) -> List[SuiteResult]:
    suites: List[Callable[[VerifyConfig], object]] = [
        check_numerics, check_variance_inequality, check_volatility_identities, check_bellman,
        check_performance_difference, check_surrogate_bounds, check_gradients, check_hessian_bound,
        check_safe_exact_ascent, check_exp_utility, check_two_cycle_ratio,
    ]
    if cfg.training:
        suites += [check_two_cycle_training, check_trvo_monotone]
    if cfg.statistical:
        suites += [check_estimators, check_sampled_gradient, check_safe_sampled]
    results: List[SuiteResult] = []
    for suite in suites:
        start = time.perf_counter()
        out = suite(cfg)
        batch = out if isinstance(out, list) else [out]
        for r in batch:
            logger.info("%-34s %s  instances=%d max_violation=%.3g tol=%.3g (%.1fs)", r.theorem_id,
                        "PASS" if r.passed else ("FAIL" if r.gating else "flag"), r.instances, r.max_violation,
                        r.tolerance, time.perf_counter() - start)
        results.extend(batch)
    return results


def report_frame(results: Iterable[SuiteResult]) -> pd.DataFrame:
    return pd.DataFrame([r.row() for r in results], columns=list(REPORT_COLUMNS))


def failed_gating(results: Iterable[SuiteResult]) -> List[str]:
    return [r.theorem_id for r in results if r.gating and not r.passed]
