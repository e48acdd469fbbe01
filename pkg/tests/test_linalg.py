import numpy as np
import pytest
from numpy.testing import assert_allclose

from volatility import linalg
from volatility.errors import NotPositiveDefinite, ShapeMismatch


def test_cholesky_identity():
    assert_allclose(linalg.cholesky(np.eye(2)), np.eye(2))


def test_cholesky_two_by_two():
    L = linalg.cholesky(np.array([[4.0, 2.0], [2.0, 3.0]]))
    assert_allclose(L, [[2.0, 0.0], [1.0, np.sqrt(2.0)]], atol=1e-14)


def test_cholesky_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite) as info:
        linalg.cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert info.value.index == 1


def test_cholesky_rejects_non_square():
    with pytest.raises(ShapeMismatch):
        linalg.cholesky(np.ones((2, 3)))


def test_cholesky_symmetrizes_float_drift():
    m = np.array([[2.0, 0.5 + 1e-15], [0.5, 1.0]])
    L = linalg.cholesky(m)
    assert_allclose(L @ L.T, linalg.symmetrize(m), atol=1e-14)


def test_jitter_rescues_semidefinite():
    # rank one: the second pivot is zero until the diagonal is nudged
    m = np.array([[1.0, 1.0], [1.0, 1.0]])
    L = linalg.cholesky(m)
    assert_allclose(L @ L.T, m, atol=1e-8)


def test_random_reconstruction(rng):
    for n in range(1, 9):
        B = rng.standard_normal((n, n))
        A = B.T @ B + 1e-3 * np.eye(n)
        L = linalg.cholesky(A)
        assert np.all(np.triu(L, 1) == 0)
        assert np.max(np.abs(L @ L.T - A)) < 1e-10 * max(1.0, np.max(np.abs(A)))


def test_logdet_and_quadform_examples():
    assert_allclose(linalg.logdet_and_quadform(np.eye(2), np.array([1.0, 1.0])), (0.0, 2.0))
    logdet, quad = linalg.logdet_and_quadform(np.diag([4.0, 9.0]), np.array([2.0, 3.0]))
    assert_allclose(logdet, np.log(36.0))
    assert_allclose(quad, 2.0)
    with pytest.raises(NotPositiveDefinite):
        linalg.logdet_and_quadform(np.array([[1.0, 2.0], [2.0, 1.0]]), np.ones(2))


def test_logdet_matches_characteristic_polynomial(rng):
    for _ in range(20):
        B = rng.standard_normal((2, 2))
        A = B.T @ B + 0.1 * np.eye(2)
        trace, det = np.trace(A), np.linalg.det(A)
        disc = np.sqrt(trace**2 - 4.0 * det)
        eig = np.array([(trace + disc) / 2.0, (trace - disc) / 2.0])
        logdet, _ = linalg.logdet_and_quadform(A, np.zeros(2))
        assert abs(logdet - np.sum(np.log(eig))) < 1e-8


def test_quadform_matches_solve(rng):
    B = rng.standard_normal((3, 3))
    A = B.T @ B + np.eye(3)
    v = rng.standard_normal(3)
    _, quad = linalg.logdet_and_quadform(linalg.CovMatrix(A), v)
    assert_allclose(quad, v @ np.linalg.solve(A, v))


def test_quadform_shape_checked():
    with pytest.raises(ShapeMismatch):
        linalg.logdet_and_quadform(np.eye(2), np.ones(3))


def test_cov_matrix_requires_symmetry():
    with pytest.raises(ValueError):
        linalg.CovMatrix(np.array([[1.0, 0.5], [0.0, 1.0]]))
    cov = linalg.CovMatrix(np.diag([1.0, 4.0]))
    assert cov.n == 2
    assert_allclose(cov.chol, np.diag([1.0, 2.0]))


def test_batch_reports_time_index():
    sigmas = np.stack([np.eye(2), np.eye(2), np.array([[1.0, 2.0], [2.0, 1.0]])])
    with pytest.raises(NotPositiveDefinite) as info:
        linalg.batch_logdet_and_quadform(sigmas, np.zeros((3, 2)))
    assert info.value.index == 2


def test_batch_matches_scalar_path(rng):
    B = rng.standard_normal((5, 3, 3))
    sigmas = np.einsum("tij,tik->tjk", B, B) + np.eye(3)
    vectors = rng.standard_normal((5, 3))
    logdets, quads = linalg.batch_logdet_and_quadform(sigmas, vectors)
    for t in range(5):
        assert_allclose((logdets[t], quads[t]), linalg.logdet_and_quadform(sigmas[t], vectors[t]))


def test_is_positive_definite_and_vech():
    assert linalg.is_positive_definite(np.eye(3))
    assert not linalg.is_positive_definite(-np.eye(2))
    assert_allclose(linalg.vech(np.array([[1.0, 2.0], [2.0, 3.0]])), [1.0, 2.0, 3.0])


def test_batch_diagonal_hand_values():
    sigmas = np.stack([np.diag([4.0, 9.0]), np.eye(2)])
    logdets, quads = linalg.batch_logdet_and_quadform(sigmas, np.array([[2.0, 3.0], [1.0, 1.0]]))
    assert_allclose(logdets, [np.log(36.0), 0.0])
    assert_allclose(quads, [2.0, 2.0])
