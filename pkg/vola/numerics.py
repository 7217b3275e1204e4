"""
Special functions and small matrix utilities for the safe-update machinery.

The regularized incomplete beta function is evaluated with the modified Lentz
continued fraction; the F-distribution CDF follows from the beta identity and its
quantile is found with a bracketed root search. Spectral norms come from power
iteration because only the top eigenvalue of small covariance matrices is needed.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import betaln

from .errors import NumericalError, ValidationError

logger = logging.getLogger(__name__)

MACHEP = 1.11022302462515654042e-16  # 2**-53
FPMIN = 1e-300
CF_MAX_ITER = 10_000


@dataclass(frozen=True)
class FParams:
    """Degrees of freedom of an F distribution"""

    d1: float
    d2: float

    def __post_init__(self):
        if not (self.d1 >= 1 and self.d2 >= 1):
            raise ValidationError(f"F degrees of freedom must be >= 1, got ({self.d1}, {self.d2})")


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    """Continued fraction for I_x(a, b), modified Lentz evaluation"""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < FPMIN:
        d = FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if abs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if abs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 3 * MACHEP:
            return h
    raise NumericalError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def regularized_incomplete_beta(x: float, a: float, b: float) -> float:
    """I_x(a, b) for a, b > 0 and 0 <= x <= 1"""
    if a <= 0 or b <= 0:
        raise ValidationError(f"incomplete beta requires a, b > 0, got a={a}, b={b}")
    if x < 0 or x > 1 or math.isnan(x):
        raise ValidationError(f"incomplete beta requires 0 <= x <= 1, got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = a * math.log(x) + b * math.log1p(-x) - betaln(a, b)
    front = math.exp(log_front)
    # The fraction converges fast below the mean; use the reflection above it.
    if x < (a + 1.0) / (a + b + 2.0):
        value = front * _beta_continued_fraction(a, b, x) / a
    else:
        value = 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b
    return min(1.0, max(0.0, value))


def f_cdf(x: float, d1: float, d2: float) -> float:
    """CDF of the F(d1, d2) distribution"""
    params = FParams(d1, d2)
    if x <= 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    z = params.d1 * x / (params.d1 * x + params.d2)
    return regularized_incomplete_beta(z, params.d1 / 2.0, params.d2 / 2.0)


def f_quantile(p: float, d1: float, d2: float) -> float:
    """Inverse of f_cdf: the x with f_cdf(x, d1, d2) = p"""
    if not (0.0 < p < 1.0):
        raise ValidationError(f"quantile level must lie in (0, 1), got {p}")
    FParams(d1, d2)

    hi = 1.0
    while f_cdf(hi, d1, d2) < p:
        hi *= 2.0
        if hi > 1e300:
            raise NumericalError(f"could not bracket the F quantile for p={p}, dof=({d1}, {d2})")
    # f_cdf(0) = 0 < p, so [0, hi] brackets the root.
    return float(brentq(lambda q: f_cdf(q, d1, d2) - p, 0.0, hi, xtol=1e-300, rtol=1e-15, maxiter=1000))


def sample_covariance(vectors) -> np.ndarray:
    """Covariance with divisor N: S = (1/N) sum (x_i - mean)(x_i - mean)^T"""
    data = np.atleast_2d(np.asarray(vectors, dtype=float))
    if data.shape[0] < 2:
        raise ValidationError(f"sample covariance needs at least 2 vectors, got {data.shape[0]}")
    centered = data - data.mean(axis=0)
    return centered.T @ centered / data.shape[0]


def gershgorin_bound(matrix) -> float:
    """max_i sum_j |A_ij|, an upper bound on every eigenvalue magnitude"""
    a = np.asarray(matrix, dtype=float)
    if a.size == 0:
        return 0.0
    return float(np.max(np.sum(np.abs(a), axis=1)))


def spectral_norm(matrix, tol: float = 1e-10, max_iter: int = 100_000, seed: int = 0) -> float:
    """Largest eigenvalue magnitude of a symmetric matrix by power iteration"""
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    if a.shape[0] != a.shape[1]:
        raise ValidationError(f"spectral_norm needs a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericalError("spectral_norm received non-finite entries")
    bound = gershgorin_bound(a)
    if bound == 0.0:
        return 0.0

    rng = np.random.default_rng(seed)
    v = rng.standard_normal(a.shape[0])
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(max_iter):
        w = a @ v
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return 0.0
        rayleigh = float(v @ w)
        estimate = abs(rayleigh)
        residual = np.linalg.norm(w - rayleigh * v)
        v = w / norm_w
        if residual <= tol * max(estimate, FPMIN):
            break
    else:
        logger.warning("power iteration hit the %d-iteration cap; returning current estimate", max_iter)
    return min(estimate, bound)


def compensated_sum(values, axis: int | None = None):
    """Exactly rounded sum (math.fsum) over all values or along an axis"""
    arr = np.asarray(values, dtype=float)
    if axis is None:
        return math.fsum(arr.ravel().tolist())
    moved = np.moveaxis(arr, axis, -1)
    flat = moved.reshape(-1, moved.shape[-1])
    sums = np.array([math.fsum(row.tolist()) for row in flat])
    return sums.reshape(moved.shape[:-1])
