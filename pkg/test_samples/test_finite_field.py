"""
Linear algebra over F_p
"""

import numpy as np
import pytest

from utils.finite_field import (
    decode_matrix, det_p, encode_matrices, inverse_matrix_p, inverse_mod, legendre, matrix_power_mod,
    nullspace_p, rank_p, solve_p,
)


def test_scalars():
    assert inverse_mod(3, 7) == 5
    assert legendre(2, 7) == 1
    assert legendre(3, 7) == -1
    assert legendre(14, 7) == 0
    with pytest.raises(ZeroDivisionError):
        inverse_mod(7, 7)


def test_rank_and_nullspace():
    A = np.array([[1, 2, 3], [2, 4, 6]])
    assert rank_p(A, 5) == 1
    basis = nullspace_p(A, 5)
    assert basis.shape == (2, 3)
    assert not np.any(A @ basis.T % 5)


def test_solve_and_invert():
    A = np.array([[2, 1], [1, 1]])
    x = solve_p(A, [3, 2], 7)
    assert np.array_equal(A @ x % 7, [3, 2])
    assert np.array_equal(A @ inverse_matrix_p(A, 7) % 7, np.eye(2, dtype=np.int64))
    with pytest.raises(ValueError):
        solve_p(np.array([[1, 1], [1, 1]]), [0, 1], 7)
    with pytest.raises(ZeroDivisionError):
        inverse_matrix_p(np.array([[1, 2], [2, 4]]), 7)


def test_determinant():
    assert det_p(np.array([[0, 1], [1, 0]]), 5) == 4
    assert det_p(np.array([[2, 1], [1, 1]]), 5) == 1


def test_nilpotent_powers_vanish():
    N = np.array([[[0, 1], [0, 0]]])
    assert not np.any(matrix_power_mod(N, 2, 5))
    assert np.array_equal(matrix_power_mod(N, 0, 5)[0], np.eye(2, dtype=np.int64))


def test_matrix_codes():
    M = np.array([[[1, 2], [3, 4]], [[0, 0], [0, 1]]])
    codes = encode_matrices(M, 5)
    assert codes.tolist() == [1 * 125 + 2 * 25 + 3 * 5 + 4, 1]
    assert np.array_equal(decode_matrix(int(codes[0]), 5, 2), M[0])
