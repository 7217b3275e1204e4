"""
Special functions and matrix helpers behind the safe batch-size bound
"""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from vola.errors import ValidationError
from vola.numerics import (compensated_sum, f_cdf, f_quantile, gershgorin_bound, regularized_incomplete_beta,
                           sample_covariance, spectral_norm)


def test_incomplete_beta_closed_forms():
    assert regularized_incomplete_beta(0.3, 1.0, 1.0) == pytest.approx(0.3, abs=1e-15)
    assert regularized_incomplete_beta(0.3, 2.5, 1.0) == pytest.approx(0.3 ** 2.5, rel=1e-13)
    assert regularized_incomplete_beta(0.5, 4.0, 4.0) == pytest.approx(0.5, abs=1e-14)
    assert regularized_incomplete_beta(0.0, 2.0, 3.0) == 0.0
    assert regularized_incomplete_beta(1.0, 2.0, 3.0) == 1.0


@settings(max_examples=200, deadline=None)
@given(st.floats(0.001, 0.999), st.floats(0.2, 50.0), st.floats(0.2, 50.0))
def test_incomplete_beta_symmetry(x, a, b):
    total = regularized_incomplete_beta(x, a, b) + regularized_incomplete_beta(1.0 - x, b, a)
    assert abs(total - 1.0) <= 1e-12


def test_incomplete_beta_rejects_bad_arguments():
    with pytest.raises(ValidationError):
        regularized_incomplete_beta(0.5, 0.0, 1.0)
    with pytest.raises(ValidationError):
        regularized_incomplete_beta(1.5, 1.0, 1.0)


@pytest.mark.parametrize("x,d1,d2", [(0.5, 3, 40), (1.0, 5, 5), (2.7, 10, 97), (0.05, 1, 2)])
def test_f_cdf_matches_scipy(x, d1, d2):
    assert f_cdf(x, d1, d2) == pytest.approx(stats.f.cdf(x, d1, d2), rel=1e-10, abs=1e-14)


@pytest.mark.parametrize("p", [0.01, 0.1, 0.5, 0.9, 0.99])
@pytest.mark.parametrize("d1,d2", [(1, 5), (3, 40), (12, 200)])
def test_f_quantile_round_trip(p, d1, d2):
    q = f_quantile(p, d1, d2)
    assert abs(f_cdf(q, d1, d2) - p) <= 1e-8
    assert q == pytest.approx(stats.f.ppf(p, d1, d2), rel=1e-7)


def test_f_quantile_rejects_levels_outside_unit_interval():
    with pytest.raises(ValidationError):
        f_quantile(1.0, 3, 4)
    with pytest.raises(ValidationError):
        f_quantile(0.5, 0, 4)


def test_sample_covariance_uses_divisor_n():
    data = np.array([[1.0, 2.0], [3.0, 6.0]])
    expected = np.array([[1.0, 2.0], [2.0, 4.0]])
    np.testing.assert_allclose(sample_covariance(data), expected)
    with pytest.raises(ValidationError):
        sample_covariance([[1.0, 2.0]])


def test_spectral_norm_matches_dense_eigenvalues(rng):
    for _ in range(10):
        a = rng.standard_normal((8, 8))
        psd = a @ a.T
        dense = float(np.max(np.linalg.eigvalsh(psd)))
        assert abs(spectral_norm(psd) - dense) / dense <= 1e-8
        assert gershgorin_bound(psd) >= dense


def test_spectral_norm_of_zero_matrix():
    assert spectral_norm(np.zeros((3, 3))) == 0.0


def test_compensated_sum_is_exactly_rounded():
    assert compensated_sum([1e16, 1.0, -1e16]) == 1.0
    rows = compensated_sum(np.array([[1e16, 1.0, -1e16], [0.1, 0.2, 0.3]]), axis=1)
    assert rows[0] == 1.0
    assert rows[1] == math.fsum([0.1, 0.2, 0.3])
