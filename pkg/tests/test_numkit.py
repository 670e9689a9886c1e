import numpy as np
import pytest

from errors import NumericalError, ValidationError
from numkit.linalg import as_matrix, det, is_symmetric, numeric_rank, singular_values, sym_eigen
from numkit.rng import RngStream, rademacher


def test_sym_eigen_matches_numpy(spd_matrix):
    values, vectors = sym_eigen(spd_matrix)
    np.testing.assert_allclose(values, [1.0, 2.0, 3.0, 5.0], atol=1e-10)
    np.testing.assert_allclose(spd_matrix @ vectors, vectors * values, atol=1e-9)
    np.testing.assert_allclose(vectors.T @ vectors, np.eye(4), atol=1e-10)


def test_sym_eigen_diagonal_and_zero():
    values, _ = sym_eigen(np.diag([3.0, -1.0, 2.0]))
    np.testing.assert_allclose(values, [-1.0, 2.0, 3.0])
    values, vectors = sym_eigen(np.zeros((3, 3)))
    assert np.all(values == 0.0)
    np.testing.assert_array_equal(vectors, np.eye(3))


def test_sym_eigen_rejects_asymmetric():
    with pytest.raises(ValidationError, match="not symmetric"):
        sym_eigen([[1.0, 2.0], [0.0, 1.0]])


def test_sym_eigen_rejects_non_square():
    with pytest.raises(ValidationError):
        sym_eigen(np.ones((2, 3)))


def test_as_matrix_rejects_non_finite():
    with pytest.raises(NumericalError):
        as_matrix([[1.0, np.nan], [0.0, 1.0]])
    with pytest.raises(ValidationError):
        as_matrix([1.0, 2.0])


def test_is_symmetric():
    assert is_symmetric(np.eye(3))
    assert not is_symmetric([[1.0, 1.0], [0.0, 1.0]])
    assert not is_symmetric(np.ones((2, 3)))


def test_det_and_rank():
    assert det([[2.0, 0.0], [0.0, 3.0]]) == pytest.approx(6.0)
    with pytest.raises(ValidationError):
        det(np.ones((2, 3)))
    m = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [1.0, 0.0, 1.0]])
    assert numeric_rank(m) == np.linalg.matrix_rank(m) == 2
    assert numeric_rank(np.zeros((3, 2))) == 0


def test_singular_values_match_numpy():
    m = np.random.default_rng(0).standard_normal((5, 3))
    np.testing.assert_allclose(singular_values(m), np.linalg.svd(m, compute_uv=False), atol=1e-10)


def test_rng_is_deterministic_and_children_differ():
    a, b = RngStream(42), RngStream(42)
    np.testing.assert_array_equal(a.normal(5), b.normal(5))
    c0, c1 = RngStream(42).child(0), RngStream(42).child(1)
    assert c0.seed != c1.seed
    assert RngStream(42).child(0).seed == c0.seed


def test_rng_rejects_bad_seed():
    with pytest.raises(ValidationError):
        RngStream(-1)


def test_rademacher_entries_and_balance():
    v = rademacher(RngStream(0), 10_000)
    assert set(np.unique(v)) == {-1.0, 1.0}
    assert abs(v.mean()) < 0.05
    with pytest.raises(ValidationError):
        rademacher(RngStream(0), 0)
