"""
Linear algebra over the prime field F_p with numpy integer arrays.

Everything here works on int64 arrays reduced into [0, p). Batched helpers
take arrays of shape (N, r, r).
"""

import logging
from typing import List, Tuple

import numpy as np

logger = logging.getLogger(__name__)


def inverse_mod(a: int, p: int) -> int:
    """Inverse of a unit mod p."""
    a %= p
    if a == 0:
        raise ZeroDivisionError(f"0 has no inverse mod {p}")
    return pow(a, -1, p)


def legendre(a: int, p: int) -> int:
    """Legendre symbol (a/p) for an odd prime p, as 0, 1 or -1."""
    a %= p
    if a == 0:
        return 0
    return 1 if pow(a, (p - 1) // 2, p) == 1 else -1


def row_reduce_p(A: np.ndarray, p: int) -> Tuple[np.ndarray, List[int]]:
    """Reduced row echelon form of A over F_p and the pivot columns."""
    A = np.array(A, dtype=np.int64) % p
    m, n = A.shape
    pivots: List[int] = []
    i = 0
    for j in range(n):
        if i >= m:
            break
        nonzero = np.nonzero(A[i:, j])[0]
        if len(nonzero) == 0:
            continue
        k = i + int(nonzero[0])
        if k != i:
            A[[i, k], :] = A[[k, i], :]
        A[i, :] = (A[i, :] * inverse_mod(int(A[i, j]), p)) % p
        for row in range(m):
            if row != i and A[row, j]:
                A[row, :] = (A[row, :] - A[row, j] * A[i, :]) % p
        pivots.append(j)
        i += 1
    return A, pivots


def rank_p(A: np.ndarray, p: int) -> int:
    if A.size == 0:
        return 0
    return len(row_reduce_p(A, p)[1])


def nullspace_p(A: np.ndarray, p: int) -> np.ndarray:
    """Basis of {x : A x = 0} over F_p, one basis vector per row.

    Basis vectors are indexed by the free columns in increasing order and
    carry a 1 in their own free column.
    """
    A = np.atleast_2d(np.array(A, dtype=np.int64))
    n = A.shape[1]
    R, pivots = row_reduce_p(A, p)
    free = [j for j in range(n) if j not in pivots]
    basis = np.zeros((len(free), n), dtype=np.int64)
    for b, f in enumerate(free):
        basis[b, f] = 1
        for i, pc in enumerate(pivots):
            basis[b, pc] = (-R[i, f]) % p
    return basis


def solve_p(A: np.ndarray, b: np.ndarray, p: int) -> np.ndarray:
    """One solution of A x = b over F_p (free variables set to 0)."""
    A = np.atleast_2d(np.array(A, dtype=np.int64))
    m, n = A.shape
    aug = np.concatenate([A % p, np.array(b, dtype=np.int64).reshape(m, 1) % p], axis=1)
    R, pivots = row_reduce_p(aug, p)
    if n in pivots:
        raise ValueError("linear system has no solution over F_p")
    x = np.zeros(n, dtype=np.int64)
    for i, pc in enumerate(pivots):
        x[pc] = R[i, n]
    return x


def inverse_matrix_p(A: np.ndarray, p: int) -> np.ndarray:
    A = np.array(A, dtype=np.int64) % p
    r = A.shape[0]
    R, pivots = row_reduce_p(np.concatenate([A, np.eye(r, dtype=np.int64)], axis=1), p)
    if pivots[:r] != list(range(r)):
        raise ZeroDivisionError("matrix is singular over F_p")
    return R[:, r:]


def det_p(A: np.ndarray, p: int) -> int:
    """Determinant over F_p by elimination."""
    A = np.array(A, dtype=np.int64) % p
    r = A.shape[0]
    det = 1
    for j in range(r):
        nonzero = np.nonzero(A[j:, j])[0]
        if len(nonzero) == 0:
            return 0
        k = j + int(nonzero[0])
        if k != j:
            A[[j, k], :] = A[[k, j], :]
            det = -det
        det = (det * int(A[j, j])) % p
        inv = inverse_mod(int(A[j, j]), p)
        for row in range(j + 1, r):
            if A[row, j]:
                A[row, :] = (A[row, :] - A[row, j] * inv * A[j, :]) % p
    return det % p


def matmul_mod(A: np.ndarray, B: np.ndarray, p: int) -> np.ndarray:
    """Product mod p, batched over leading axes."""
    return np.matmul(A, B) % p


def matrix_power_mod(A: np.ndarray, e: int, p: int) -> np.ndarray:
    r = A.shape[-1]
    result = np.broadcast_to(np.eye(r, dtype=np.int64), A.shape).copy()
    base = A % p
    while e:
        if e & 1:
            result = matmul_mod(result, base, p)
        base = matmul_mod(base, base, p)
        e >>= 1
    return result


def encode_matrices(M: np.ndarray, q: int) -> np.ndarray:
    """Integer codes sum(entry * q**pos) of (N, r, r) matrices, row-major.

    The first entry is the most significant digit, so sorting codes sorts
    matrices lexicographically.
    """
    N = M.shape[0]
    flat = M.reshape(N, -1).astype(np.int64)
    weights = q ** np.arange(flat.shape[1] - 1, -1, -1, dtype=np.int64)
    return flat @ weights


def decode_matrix(code: int, q: int, r: int) -> np.ndarray:
    entries = []
    for _ in range(r * r):
        entries.append(code % q)
        code //= q
    return np.array(entries[::-1], dtype=np.int64).reshape(r, r)
