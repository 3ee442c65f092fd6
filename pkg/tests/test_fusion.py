import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relau.errors import RegularizationError, SizeError
from relau.fusion import kcca_fit, kcca_project, median_gamma, rbf_kernel, rbf_matrix, two_view_kernel


def test_rbf_examples():
    assert rbf_kernel([1.0, 2.0], [1.0, 2.0], 0.7) == 1.0
    assert abs(rbf_kernel([0.0, 0.0], [1.0, 0.0], math.log(2)) - 0.5) < 1e-15
    assert rbf_kernel([0.0], [1.0], 1e6) < 1e-300


def test_rbf_matrix_matches_scalar(rng):
    a, b = rng.normal(size=(4, 3)), rng.normal(size=(5, 3))
    k = rbf_matrix(a, b, 0.3)
    assert np.allclose(k, [[rbf_kernel(x, y, 0.3) for y in b] for x in a], rtol=1e-12)


def test_two_view_kernel_is_equal_weight_sum(rng):
    z1, z2 = rng.normal(size=(3, 2)), rng.normal(size=(3, 4))
    k = two_view_kernel(z1, z2, z1, z2, 0.5, 2.0)
    assert np.allclose(np.diag(k), 1.0)
    assert np.allclose(k, 0.5 * rbf_matrix(z1, z1, 0.5) + 0.5 * rbf_matrix(z2, z2, 2.0))


def test_identical_views(rng):
    x = rng.normal(size=(80, 5))
    m = kcca_fit(x, x, kappa=1e-3, components=5)
    assert m.correlations[0] >= 0.99


def test_shared_latent(rng):
    t = rng.normal(size=(150, 1))
    x1 = t @ rng.normal(size=(1, 4)) + 0.05 * rng.normal(size=(150, 4))
    x2 = np.sin(t) @ rng.normal(size=(1, 3)) + 0.05 * rng.normal(size=(150, 3))
    assert kcca_fit(x1, x2, components=3).correlations[0] >= 0.9


def test_shared_latent_with_nuisance_columns(rng):
    # independent extra columns dilute the RBF kernel; correlation stays high but lower
    t = rng.normal(size=(150, 1))
    x1 = np.c_[t, rng.normal(size=(150, 3))] + 0.05 * rng.normal(size=(150, 4))
    x2 = np.c_[t, rng.normal(size=(150, 2))] + 0.05 * rng.normal(size=(150, 3))
    assert kcca_fit(x1, x2, kappa=1e-2, components=3).correlations[0] >= 0.8


def test_independent_noise_below_permutation_null():
    rng = np.random.default_rng(5)
    x1, x2 = rng.normal(size=(200, 3)), rng.normal(size=(200, 3))
    rho = kcca_fit(x1, x2, kappa=0.5, components=1).correlations[0]
    null = [kcca_fit(x1, x2[rng.permutation(200)], kappa=0.5, components=1).correlations[0] for _ in range(200)]
    assert rho < np.percentile(null, 95)


def test_training_projection_self_consistency(rng):
    x1, x2 = rng.normal(size=(40, 3)), rng.normal(size=(40, 2))
    m = kcca_fit(x1, x2, components=6)
    z1, z2 = kcca_project(m, x1, x2)
    assert np.allclose(z1.std(axis=0), 1.0, atol=1e-6)
    assert np.allclose(z2.std(axis=0), 1.0, atol=1e-6)
    a, b = kcca_project(m, x1[3], x2[3])
    assert np.allclose(a, z1[3], atol=1e-8) and np.allclose(b, z2[3], atol=1e-8)
    c, d = kcca_project(m, x1[3], x2[3])
    assert np.array_equal(a, c) and np.array_equal(b, d)


def test_errors(rng):
    x = rng.normal(size=(10, 2))
    with pytest.raises(RegularizationError):
        kcca_fit(x, x, kappa=0.0, components=2)
    with pytest.raises(SizeError):
        kcca_fit(x, x[:9], components=2)
    with pytest.raises(SizeError):
        kcca_fit(x, x, components=11)


def test_median_gamma(rng):
    x = rng.normal(size=(9, 2))
    d2 = [np.sum((x[i] - x[j]) ** 2) for i in range(9) for j in range(i + 1, 9)]
    assert abs(median_gamma(x) - 1 / np.median(d2)) < 1e-12


@settings(max_examples=20)
@given(st.integers(0, 10_000), st.integers(12, 40))
def test_permutation_invariance(seed, n):
    rng = np.random.default_rng(seed)
    x1, x2 = rng.normal(size=(n, 3)), rng.normal(size=(n, 2))
    x2[:, 0] += x1[:, 0]
    perm = rng.permutation(n)
    a = kcca_fit(x1, x2, components=5).correlations
    b = kcca_fit(x1[perm], x2[perm], components=5).correlations
    assert np.allclose(a, b, atol=1e-8)


@settings(max_examples=20)
@given(st.integers(0, 10_000), st.floats(1e-4, 1.0), st.integers(8, 30))
def test_correlations_sorted_and_bounded(seed, kappa, n):
    rng = np.random.default_rng(seed)
    m = kcca_fit(rng.normal(size=(n, 3)), rng.normal(size=(n, 4)), kappa=kappa, components=min(n, 6))
    r = m.correlations
    assert np.all(np.isfinite(r)) and np.all((0 <= r) & (r <= 1))
    assert np.all(np.diff(r) <= 0)


def test_kappa_one_is_finite(rng):
    x1, x2 = rng.normal(size=(30, 3)), rng.normal(size=(30, 3))
    m = kcca_fit(x1, x2, kappa=1.0, components=5)
    z1, z2 = kcca_project(m, x1, x2)
    assert np.all(np.isfinite(m.correlations)) and np.all(np.isfinite(z1)) and np.all(np.isfinite(z2))
