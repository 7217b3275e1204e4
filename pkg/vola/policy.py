"""
Linear-feature policies with closed-form derivatives.

Two classes are supported: a softmax over per-action linear logits and a scalar
Gaussian whose mean is linear in the features. Everything the optimizers need
(score, observed information, KL, Fisher-vector products, smoothing constants)
is computed in closed form so that exact checks are possible.
"""

import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import ValidationError
from .numerics import spectral_norm

logger = logging.getLogger(__name__)

SOFTMAX = "softmax_linear"
GAUSSIAN = "gaussian_linear"
POLICY_KINDS = (SOFTMAX, GAUSSIAN)
FEATURE_MAPS = ("identity", "bias")
CHECKPOINT_HEADER = "# vola policy checkpoint v1"


@dataclass(frozen=True, eq=False)
class PolicyParams:
    kind: str
    theta: np.ndarray
    n_actions: int
    state_dim: int
    sigma: Optional[float] = None
    feature_map: str = "identity"

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float).ravel()
        object.__setattr__(self, "theta", theta)
        if self.kind not in POLICY_KINDS:
            raise ValidationError(f"unknown policy kind {self.kind!r}; expected one of {POLICY_KINDS}")
        if self.feature_map not in FEATURE_MAPS:
            raise ValidationError(f"unknown feature map {self.feature_map!r}; expected one of {FEATURE_MAPS}")
        if self.n_actions < 1 or self.state_dim < 1:
            raise ValidationError("n_actions and state_dim must be >= 1")
        if self.kind == GAUSSIAN and not (self.sigma is not None and self.sigma > 0):
            raise ValidationError("gaussian_linear policies need sigma > 0")
        if theta.size != self.m:
            raise ValidationError(f"theta has {theta.size} entries, {self.kind} needs m={self.m}")
        if not np.all(np.isfinite(theta)):
            raise ValidationError("theta must be finite")

    @property
    def feature_dim(self) -> int:
        return self.state_dim + (1 if self.feature_map == "bias" else 0)

    @property
    def m(self) -> int:
        return self.n_actions * self.feature_dim if self.kind == SOFTMAX else self.feature_dim

    @property
    def is_softmax(self) -> bool:
        return self.kind == SOFTMAX

    def with_theta(self, theta: np.ndarray) -> "PolicyParams":
        return replace(self, theta=np.asarray(theta, dtype=float).copy())

    def phi(self, states) -> np.ndarray:
        """Feature map applied along the last axis"""
        s = np.asarray(states, dtype=float)
        if s.shape[-1] != self.state_dim:
            raise ValidationError(f"state features have dimension {s.shape[-1]}, policy expects {self.state_dim}")
        if self.feature_map == "bias":
            return np.concatenate((s, np.ones(s.shape[:-1] + (1,))), axis=-1)
        return s

    def weights(self) -> np.ndarray:
        """theta as an (A, d) matrix (softmax) or a d-vector (gaussian)"""
        if self.kind == SOFTMAX:
            return self.theta.reshape(self.n_actions, self.feature_dim)
        return self.theta

    def logits(self, states) -> np.ndarray:
        return self.phi(states) @ self.weights().T

    def probabilities(self, states) -> np.ndarray:
        """Softmax probabilities along the last axis"""
        z = self.logits(states)
        z = z - np.max(z, axis=-1, keepdims=True)
        e = np.exp(z)
        return e / np.sum(e, axis=-1, keepdims=True)

    def log_probabilities(self, states) -> np.ndarray:
        z = self.logits(states)
        z = z - np.max(z, axis=-1, keepdims=True)
        return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))

    def mean(self, states) -> np.ndarray:
        return self.phi(states) @ self.theta

    def table(self, state_features: np.ndarray) -> np.ndarray:
        """(S, A) action probabilities for every row of a state-feature matrix"""
        if self.kind != SOFTMAX:
            raise ValidationError("only softmax policies have a tabular action distribution")
        return self.probabilities(state_features)

    def sample(self, state, rng: np.random.Generator) -> Union[int, float]:
        """Draw an action: an index (softmax, inverse CDF of one uniform) or a real (gaussian)"""
        if self.kind == SOFTMAX:
            p = self.probabilities(state)
            cums = np.cumsum(p, axis=-1)
            return int(min(np.sum(cums <= rng.random()), self.n_actions - 1))
        return float(self.mean(state) + self.sigma * rng.standard_normal())

    def to_env_action(self, action: Union[int, float]) -> int:
        """Environment action index; gaussian draws are rounded and clipped onto the index range"""
        if self.kind == SOFTMAX:
            return int(action)
        return int(np.clip(np.rint(action), 0, self.n_actions - 1))


def softmax_policy(n_actions: int, state_dim: int, theta=None, feature_map: str = "identity") -> PolicyParams:
    d = state_dim + (1 if feature_map == "bias" else 0)
    theta = np.zeros(n_actions * d) if theta is None else theta
    return PolicyParams(SOFTMAX, theta, n_actions, state_dim, None, feature_map)


def gaussian_policy(n_actions: int, state_dim: int, sigma: float, theta=None, feature_map: str = "identity") -> PolicyParams:
    d = state_dim + (1 if feature_map == "bias" else 0)
    theta = np.zeros(d) if theta is None else theta
    return PolicyParams(GAUSSIAN, theta, n_actions, state_dim, sigma, feature_map)


@dataclass(frozen=True)
class Categorical:
    probs: np.ndarray

    def log_prob(self, action: int) -> float:
        return float(np.log(self.probs[action]))


@dataclass(frozen=True)
class Normal:
    loc: float
    scale: float

    def log_prob(self, action: float) -> float:
        z = (action - self.loc) / self.scale
        return float(-0.5 * z * z - math.log(self.scale) - 0.5 * math.log(2.0 * math.pi))


def action_distribution(policy: PolicyParams, state_features) -> Union[Categorical, Normal]:
    s = np.asarray(state_features, dtype=float)
    if s.ndim != 1:
        raise ValidationError("action_distribution takes a single state-feature vector")
    if policy.kind == SOFTMAX:
        return Categorical(policy.probabilities(s))
    return Normal(float(policy.mean(s)), float(policy.sigma))


def log_prob(policy: PolicyParams, state, action) -> float:
    return action_distribution(policy, state).log_prob(action)


def log_prob_batch(policy: PolicyParams, states, actions) -> np.ndarray:
    """log pi(a|s) for arrays of states (..., state_dim) and actions (...)"""
    actions = np.asarray(actions)
    if policy.kind == SOFTMAX:
        logp = policy.log_probabilities(states)
        return np.take_along_axis(logp, actions.astype(int)[..., None], axis=-1)[..., 0]
    z = (actions.astype(float) - policy.mean(states)) / policy.sigma
    return -0.5 * z * z - math.log(policy.sigma) - 0.5 * math.log(2.0 * math.pi)


def score(policy: PolicyParams, state, action) -> np.ndarray:
    """grad_theta log pi(a|s)"""
    return score_batch(policy, np.asarray(state, dtype=float)[None, :], np.asarray([action]))[0]


def score_batch(policy: PolicyParams, states, actions) -> np.ndarray:
    """Scores for arrays of states (..., state_dim) and actions (...); returns (..., m)"""
    phi = policy.phi(states)
    actions = np.asarray(actions)
    if policy.kind == SOFTMAX:
        p = policy.probabilities(states)
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, actions.astype(int)[..., None], 1.0, axis=-1)
        blocks = (onehot - p)[..., :, None] * phi[..., None, :]
        return blocks.reshape(phi.shape[:-1] + (policy.m,))
    resid = (actions.astype(float) - phi @ policy.theta) / policy.sigma ** 2
    return phi * resid[..., None]


def observed_information(policy: PolicyParams, state, action=None) -> np.ndarray:
    """-grad grad^T log pi(a|s); for both classes it does not depend on a"""
    phi = policy.phi(np.asarray(state, dtype=float))
    outer = np.outer(phi, phi)
    if policy.kind == SOFTMAX:
        p = policy.probabilities(state)
        return np.kron(np.diag(p) - np.outer(p, p), outer)
    return outer / policy.sigma ** 2


def _check_pair(p: PolicyParams, q: PolicyParams):
    if p.kind != q.kind or p.m != q.m or p.state_dim != q.state_dim or p.feature_map != q.feature_map:
        raise ValidationError("KL needs two policies of the same kind and dimensions")


def kl_batch(p: PolicyParams, q: PolicyParams, states) -> np.ndarray:
    """KL(p(.|s) || q(.|s)) for every state row"""
    _check_pair(p, q)
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if p.kind == SOFTMAX:
        lp = p.log_probabilities(states)
        lq = q.log_probabilities(states)
        return np.maximum(np.sum(np.exp(lp) * (lp - lq), axis=-1), 0.0)
    mp, mq = p.mean(states), q.mean(states)
    return (np.log(q.sigma / p.sigma) + (p.sigma ** 2 + (mp - mq) ** 2) / (2.0 * q.sigma ** 2) - 0.5)


def kl_divergence(p: PolicyParams, q: PolicyParams, state) -> float:
    return float(kl_batch(p, q, np.asarray(state, dtype=float)[None, :])[0])


def kl_max(p: PolicyParams, q: PolicyParams, states) -> float:
    return float(np.max(kl_batch(p, q, states)))


def fisher_vector_product(policy: PolicyParams, states, v, damping: float = 0.0) -> np.ndarray:
    """Average of F(s) v over the state sample, F(s) = E_a[score score^T], without forming F"""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if states.shape[0] == 0:
        raise ValidationError("fisher_vector_product needs a non-empty state sample")
    v = np.asarray(v, dtype=float)
    if v.size != policy.m:
        raise ValidationError(f"vector has {v.size} entries, policy has m={policy.m}")
    phi = policy.phi(states)
    n = phi.shape[0]
    if policy.kind == SOFTMAX:
        p = policy.probabilities(states)
        u = phi @ v.reshape(policy.n_actions, policy.feature_dim).T
        u_bar = np.sum(p * u, axis=1, keepdims=True)
        weighted = p * (u - u_bar)
        out = (weighted.T @ phi).ravel() / n
    else:
        out = phi.T @ (phi @ v) / (n * policy.sigma ** 2)
    return out + damping * v


def fisher_matrix(policy: PolicyParams, states) -> np.ndarray:
    """Dense Fisher matrix averaged over states (small m only)"""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    return np.mean([observed_information(policy, s) for s in states], axis=0)


@dataclass(frozen=True)
class SmoothingConstants:
    """Bounds on E||score||, E||score||^2 and E||observed information||"""
    psi: float
    kappa: float
    xi: float

    def __post_init__(self):
        for name in ("psi", "kappa", "xi"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise ValidationError(f"smoothing constant {name} must be finite and >= 0, got {value}")


def smoothing_constants(policy: PolicyParams, state_sample, safety_factor: float = 1.0,
                        uniform: bool = False) -> SmoothingConstants:
    """
    Maxima over the state sample of the exact per-state expectations.

    With `uniform=True` a softmax policy gets bounds that hold for every theta
    (they depend on the features only). The safety factor multiplies psi and xi
    and, squared, kappa, so psi^2 <= kappa is preserved.
    """
    states = np.atleast_2d(np.asarray(state_sample, dtype=float))
    if states.shape[0] == 0 or states.size == 0:
        raise ValidationError("smoothing constants need a non-empty state sample")
    if safety_factor < 1.0:
        raise ValidationError(f"safety factor must be >= 1, got {safety_factor}")
    states = np.unique(states, axis=0)
    phi = policy.phi(states)
    phi_sq = np.sum(phi * phi, axis=1)
    phi_norm = np.sqrt(phi_sq)

    if policy.kind == GAUSSIAN:
        sigma = policy.sigma
        psi = float(np.max(phi_norm)) * math.sqrt(2.0 / math.pi) / sigma
        kappa = float(np.max(phi_sq)) / sigma ** 2
        xi = kappa
    elif uniform:
        spread = 1.0 - 1.0 / policy.n_actions
        psi = math.sqrt(spread) * float(np.max(phi_norm))
        kappa = spread * float(np.max(phi_sq))
        xi = 0.5 * float(np.max(phi_sq))
    else:
        p = policy.probabilities(states)
        # ||e_a - p||^2 = 1 - 2 p_a + sum p^2
        dist = np.sqrt(np.maximum(1.0 - 2.0 * p + np.sum(p * p, axis=1, keepdims=True), 0.0))
        psi_s = np.sum(p * dist, axis=1) * phi_norm
        kappa_s = (1.0 - np.sum(p * p, axis=1)) * phi_sq
        xi_s = np.array([spectral_norm(np.diag(row) - np.outer(row, row)) for row in p]) * phi_sq
        psi, kappa, xi = float(np.max(psi_s)), float(np.max(kappa_s)), float(np.max(xi_s))

    f = safety_factor
    return SmoothingConstants(psi * f, kappa * f * f, xi * f)


def save_checkpoint(policy: PolicyParams, path: Union[str, Path]) -> None:
    """Flat key=value text: kind, dims, feature map, sigma and full-precision theta"""
    sigma = "none" if policy.sigma is None else repr(float(policy.sigma))
    lines = [
        CHECKPOINT_HEADER,
        f"kind={policy.kind}",
        f"n_actions={policy.n_actions}",
        f"state_dim={policy.state_dim}",
        f"feature_map={policy.feature_map}",
        f"sigma={sigma}",
        "theta=" + " ".join(repr(float(x)) for x in policy.theta),
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_checkpoint(path: Union[str, Path]) -> PolicyParams:
    fields = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValidationError(f"{path}, line {lineno}: expected key=value")
        key, value = line.split("=", 1)
        fields[key.strip()] = value.strip()
    missing = {"kind", "n_actions", "state_dim", "feature_map", "sigma", "theta"} - fields.keys()
    if missing:
        raise ValidationError(f"{path}: checkpoint misses {sorted(missing)}")
    try:
        theta = np.array([float(x) for x in fields["theta"].split()]) if fields["theta"] else np.zeros(0)
        sigma = None if fields["sigma"] == "none" else float(fields["sigma"])
        n_actions = int(fields["n_actions"])
        state_dim = int(fields["state_dim"])
    except ValueError as e:
        raise ValidationError(f"{path}: malformed checkpoint value ({e})") from None
    return PolicyParams(fields["kind"], theta, n_actions, state_dim, sigma, fields["feature_map"])
