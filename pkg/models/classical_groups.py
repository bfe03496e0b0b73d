"""
Sp(2n) and SO(2n+1): descriptors, finite groups of points, Lie algebras,
Cayley transforms, the group ambient block and Iwahori coset combinatorics.
"""

import itertools
import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from typing import Dict, List, Sequence, Tuple

import numpy as np
import sympy
from sympy import Matrix, Poly, Symbol, primitive_root

from models.padic_model import (
    AmbientBlock, ModelKind, ModelSpec, ResidueRing, TruncatedElement, raw_valuation,
)
from models.pas_language import Eq, Formula, IntConst, Var, polynomial_term
from utils.finite_field import (
    det_p, encode_matrices, inverse_matrix_p, matmul_mod, nullspace_p, solve_p,
)

logger = logging.getLogger(__name__)

MultiIndex = Tuple[int, ...]
RawMatrix = Tuple[int, ...]  # row-major raw encodings


class GroupKind(Enum):
    SP = 'sp'
    SO = 'so'


class InvalidMultiIndexError(ValueError):
    pass


class GroupBudgetError(ValueError):
    pass


class NotAPowerError(ValueError):
    pass


class UnresolvedMembershipError(ValueError):
    pass


class CayleyError(ValueError):
    pass


@dataclass(frozen=True)
class GroupDescriptor:
    """Sp(2n) or SO(2n+1), cut out of GL_r by tgJg = J."""
    kind: GroupKind
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"rank must be at least 1, got {self.n}")

    @classmethod
    def symplectic(cls, n: int) -> 'GroupDescriptor':
        return cls(GroupKind.SP, n)

    @classmethod
    def orthogonal(cls, n: int) -> 'GroupDescriptor':
        return cls(GroupKind.SO, n)

    @classmethod
    def from_flag(cls, kind: str, rank: int) -> 'GroupDescriptor':
        try:
            return cls(GroupKind(kind.lower()), rank)
        except ValueError:
            raise ValueError(f"unknown group kind '{kind}', expected 'sp' or 'so'") from None

    @property
    def r(self) -> int:
        return 2 * self.n if self.kind is GroupKind.SP else 2 * self.n + 1

    @property
    def dim(self) -> int:
        return self.n * (2 * self.n + 1)

    @property
    def l(self) -> int:
        return self.n

    @property
    def name(self) -> str:
        return f"Sp({self.r})" if self.kind is GroupKind.SP else f"SO({self.r})"

    @property
    def J(self) -> np.ndarray:
        r = self.r
        if self.kind is GroupKind.SO:
            return np.fliplr(np.eye(r, dtype=np.int64))
        n = self.n
        A = np.fliplr(np.eye(n, dtype=np.int64))
        J = np.zeros((r, r), dtype=np.int64)
        J[:n, n:] = A
        J[n:, :n] = -A
        return J

    def inverse_formula(self, g: np.ndarray, q: int) -> np.ndarray:
        """g^-1 = tJ tg J for points of the group, batched over leading axes."""
        J = self.J
        gt = np.swapaxes(g, -1, -2)
        return (J.T @ gt @ J) % q


# ----------------------------------------------------------------------------
# Orders and Iwahori volumes
# ----------------------------------------------------------------------------

def order_formula(g: GroupDescriptor, q: int) -> int:
    """|G(F_q)| = q^{n^2} prod_{i=1}^n (q^{2i} - 1), the same for both kinds."""
    out = q ** (g.n * g.n)
    for i in range(1, g.n + 1):
        out *= q ** (2 * i) - 1
    return out


def borel_order(g: GroupDescriptor, q: int) -> int:
    return (q - 1) ** g.n * q ** (g.n * g.n)


def index_K_over_I(g: GroupDescriptor, q: int) -> int:
    return order_formula(g, q) // borel_order(g, q)


def iwahori_volume(g: GroupDescriptor, q: int) -> Fraction:
    return Fraction(borel_order(g, q), q ** g.dim)


def group_volume(g: GroupDescriptor, q: int) -> Fraction:
    return Fraction(order_formula(g, q), q ** g.dim)


# ----------------------------------------------------------------------------
# Finite groups of points
# ----------------------------------------------------------------------------

class FiniteMatrixGroup:
    """G(F_q) as a lexicographically sorted array of matrices."""

    def __init__(self, descriptor: GroupDescriptor, q: int, elements: np.ndarray):
        self.descriptor = descriptor
        self.q = q
        codes = encode_matrices(elements, q)
        order = np.argsort(codes, kind='stable')
        self.elements = elements[order]
        self.codes = codes[order]

    def __len__(self) -> int:
        return len(self.elements)

    def index_of(self, M: np.ndarray) -> np.ndarray:
        """Indices of the (N, r, r) matrices M; raises KeyError if one is missing."""
        codes = encode_matrices(np.asarray(M).reshape(-1, self.descriptor.r, self.descriptor.r) % self.q, self.q)
        idx = np.searchsorted(self.codes, codes)
        idx = np.minimum(idx, len(self.codes) - 1)
        if not np.all(self.codes[idx] == codes):
            raise KeyError("matrix is not an element of the group")
        return idx

    @property
    def identity_index(self) -> int:
        return int(self.index_of(np.eye(self.descriptor.r, dtype=np.int64)[None])[0])

    def inverse_all(self) -> np.ndarray:
        return self.index_of(self.descriptor.inverse_formula(self.elements, self.q))

    def conjugates(self, x: np.ndarray) -> np.ndarray:
        """g x g^-1 for every g in the group, as an (N, r, r) array."""
        inv = self.descriptor.inverse_formula(self.elements, self.q)
        return matmul_mod(matmul_mod(self.elements, x, self.q), inv, self.q)

    def conjugacy_classes(self) -> List[np.ndarray]:
        """Classes as sorted index arrays, ordered by their least element."""
        assigned = np.zeros(len(self), dtype=bool)
        classes = []
        for i in range(len(self)):
            if assigned[i]:
                continue
            members = np.unique(self.index_of(self.conjugates(self.elements[i])))
            assigned[members] = True
            classes.append(members)
        logger.debug(f"{self.descriptor.name} over F_{self.q}: {len(classes)} conjugacy classes")
        return classes


def _vectors(q: int, r: int) -> np.ndarray:
    return np.array(list(itertools.product(range(q), repeat=r)), dtype=np.int64)


def enumerate_finite_group(g: GroupDescriptor, q: int, budget: int = 200_000) -> FiniteMatrixGroup:
    """All of G(F_q) by column backtracking on the form tgJg = J."""
    expected = order_formula(g, q)
    if expected > budget:
        raise GroupBudgetError(f"|{g.name}(F_{q})| = {expected} exceeds the budget {budget}")
    return _enumerate_cached(g, q)


@lru_cache(maxsize=32)
def _enumerate_cached(g: GroupDescriptor, q: int) -> FiniteMatrixGroup:
    r, J = g.r, g.J
    V = _vectors(q, r)
    gram = (V @ J @ V.T) % q
    target = J % q
    found: List[np.ndarray] = []

    def extend(cols: List[int]):
        j = len(cols)
        if j == r:
            M = V[cols].T
            if g.kind is GroupKind.SO and det_p(M, q) != 1:
                return
            found.append(M)
            return
        mask = np.diag(gram) == target[j, j]
        for i, c in enumerate(cols):
            mask &= gram[c] == target[i, j]
        for c in np.nonzero(mask)[0]:
            extend(cols + [int(c)])

    extend([])
    elements = np.array(found, dtype=np.int64)
    logger.info(f"Enumerating {g.name} over F_{q}: {len(elements)} elements")
    if len(elements) != order_formula(g, q):
        raise GroupBudgetError(
            f"enumeration of {g.name}(F_{q}) found {len(elements)} elements, expected {order_formula(g, q)}")
    return FiniteMatrixGroup(g, q, elements)


# ----------------------------------------------------------------------------
# Multi-indices
# ----------------------------------------------------------------------------

def validate_multi_index(g: GroupDescriptor, lam: Sequence[int]) -> MultiIndex:
    lam = tuple(int(x) for x in lam)
    r = g.r
    if len(lam) != r:
        raise InvalidMultiIndexError(f"{g.name} needs {r} entries, got {len(lam)}")
    for i in range(r):
        if lam[i] + lam[r - 1 - i] != 0:
            raise InvalidMultiIndexError(f"{lam} violates lambda_i = -lambda_(r+1-i) at position {i + 1}")
    return lam


def valid_multi_indices(g: GroupDescriptor, bound: int) -> List[MultiIndex]:
    out = []
    for head in itertools.product(range(-bound, bound + 1), repeat=g.n):
        middle = (0,) if g.kind is GroupKind.SO else ()
        out.append(tuple(head) + middle + tuple(-x for x in reversed(head)))
    return sorted(out)


def a_lambda(g: GroupDescriptor, lam: Sequence[int], m: ModelSpec) -> List[List[TruncatedElement]]:
    """diag(w^lambda_i) over the fraction field model."""
    lam = validate_multi_index(g, lam)
    r = g.r
    zero = TruncatedElement.zero(m.prime, m.kind)
    return [[TruncatedElement.uniformizer_power(m.prime, m.kind, lam[i]) if i == j else zero for j in range(r)]
            for i in range(r)]


def conj_exponents(g: GroupDescriptor, lam: Sequence[int]) -> np.ndarray:
    """n[k, e] = lambda_e - lambda_k: entry (k, e) of a^-1 M a is w^n[k, e] M[k, e]."""
    lam = np.array(validate_multi_index(g, lam), dtype=np.int64)
    return lam[None, :] - lam[:, None]


# ----------------------------------------------------------------------------
# Lie algebra, adjoint representation, regularity
# ----------------------------------------------------------------------------

def matrix_symbols(g: GroupDescriptor, prefix: str) -> Matrix:
    r = g.r
    return Matrix(r, r, lambda i, j: Symbol(f"{prefix}{i + 1}_{j + 1}"))


def matrix_vars(g: GroupDescriptor, prefix: str) -> List[Var]:
    r = g.r
    return [Var(f"{prefix}{i + 1}_{j + 1}") for i in range(r) for j in range(r)]


@dataclass(frozen=True)
class LieAlgebraBasis:
    """Basis of {X : tXJ + JX = 0}, one element per free entry (row-major)."""
    matrices: np.ndarray
    free_positions: Tuple[Tuple[int, int], ...]

    def coordinates(self, X: np.ndarray) -> np.ndarray:
        return np.array([X[i, j] for i, j in self.free_positions], dtype=np.int64)

    def kinds(self) -> List[str]:
        """'upper', 'lower' or 'cartan' for each basis element."""
        out = []
        for X in self.matrices:
            rows, cols = np.nonzero(X)
            if np.all(rows < cols):
                out.append('upper')
            elif np.all(rows > cols):
                out.append('lower')
            else:
                out.append('cartan')
        return out


@lru_cache(maxsize=None)
def lie_algebra_basis(g: GroupDescriptor) -> LieAlgebraBasis:
    r = g.r
    X = matrix_symbols(g, 'x')
    Jm = Matrix(g.J.tolist())
    eqs = X.T * Jm + Jm * X
    unknowns = list(X)
    system, _ = sympy.linear_eq_to_matrix([e for e in eqs if e != 0], unknowns)
    basis = system.nullspace()
    mats, free = [], []
    for vec in basis:
        if any(sympy.denom(c) != 1 for c in vec):
            raise ValueError("Lie algebra basis is not integral")
        M = np.array([int(c) for c in vec], dtype=np.int64).reshape(r, r)
        pos = next(k for k in range(r * r) if vec[k] == 1 and
                   all(other[k] == 0 for other in basis if other is not vec))
        mats.append(M)
        free.append(divmod(pos, r))
    if len(mats) != g.dim:
        raise ValueError(f"Lie algebra of {g.name} has dimension {len(mats)}, expected {g.dim}")
    return LieAlgebraBasis(np.array(mats, dtype=np.int64), tuple(free))


class AdjointRep:
    """Ad(gamma) on the Lie algebra basis, numerically mod q or symbolically."""

    def __init__(self, g: GroupDescriptor):
        self.descriptor = g
        self.basis = lie_algebra_basis(g)

    @property
    def dim(self) -> int:
        return len(self.basis.matrices)

    def numeric(self, gamma: np.ndarray, q: int) -> np.ndarray:
        gamma = np.asarray(gamma, dtype=np.int64) % q
        inv = self.descriptor.inverse_formula(gamma, q)
        cols = []
        for X in self.basis.matrices:
            Y = (gamma @ X @ inv) % q
            cols.append([Y[i, j] for i, j in self.basis.free_positions])
        return np.array(cols, dtype=np.int64).T % q

    def symbolic(self, prefix: str = 'g') -> Matrix:
        return _symbolic_adjoint(self.descriptor, prefix)


def adjoint_rep(g: GroupDescriptor) -> AdjointRep:
    return AdjointRep(g)


@lru_cache(maxsize=None)
def _symbolic_adjoint(g: GroupDescriptor, prefix: str) -> Matrix:
    basis = lie_algebra_basis(g)
    G = matrix_symbols(g, prefix)
    Jm = Matrix(g.J.tolist())
    Ginv = Jm.T * G.T * Jm
    cols = []
    for X in basis.matrices:
        Y = (G * Matrix(X.tolist()) * Ginv).applyfunc(sympy.expand)
        cols.append([Y[i, j] for i, j in basis.free_positions])
    return Matrix(cols).T


@lru_cache(maxsize=None)
def regularity_polynomial(g: GroupDescriptor, prefix: str = 'g') -> Poly:
    """D_l: coefficient of t^l in det((t+1)I - Ad(gamma))."""
    t = Symbol('t')
    A = adjoint_rep(g).symbolic(prefix)
    logger.info(f"Expanding the regularity polynomial of {g.name} ({A.shape[0]}x{A.shape[0]} determinant)")
    char = ((t + 1) * sympy.eye(A.shape[0]) - A).det(method='berkowitz')
    coeff = Poly(sympy.expand(char), t).coeff_monomial(t ** g.l)
    return Poly(sympy.expand(coeff), *list(matrix_symbols(g, prefix)))


def group_equation_atoms(g: GroupDescriptor, prefix: str = 'g') -> List[Formula]:
    """The equations tXJX = J as atoms poly = 0, upper triangle only."""
    return list(_group_equation_atoms(g, prefix))


@lru_cache(maxsize=None)
def _group_equation_atoms(g: GroupDescriptor, prefix: str) -> Tuple[Formula, ...]:
    X = matrix_symbols(g, prefix)
    Jm = Matrix(g.J.tolist())
    E = (X.T * Jm * X - Jm).applyfunc(sympy.expand)
    gens = list(X)
    variables = matrix_vars(g, prefix)
    atoms = []
    for i in range(g.r):
        for j in range(i, g.r):
            if E[i, j] == 0:
                continue
            poly = Poly(E[i, j], *gens)
            atoms.append(Eq(polynomial_term(poly.terms(), variables), IntConst(0)))
    if g.kind is GroupKind.SO:
        # tXJX = J only cuts out O(2n+1); det = 1 picks the special component
        poly = Poly(X.det(method='berkowitz') - 1, *gens)
        atoms.append(Eq(polynomial_term(poly.terms(), variables), IntConst(0)))
    return tuple(atoms)


# ----------------------------------------------------------------------------
# Cayley transform over F_q
# ----------------------------------------------------------------------------

def _in_lie_algebra(g: GroupDescriptor, Y: np.ndarray, q: int) -> bool:
    J = g.J
    return not np.any((Y.T @ J + J @ Y) % q)


def _in_group(g: GroupDescriptor, y: np.ndarray, q: int) -> bool:
    J = g.J
    return not np.any((y.T @ J @ y - J) % q)


def _cayley_formula(y: np.ndarray, q: int) -> np.ndarray:
    r = y.shape[0]
    one = np.eye(r, dtype=np.int64)
    try:
        inv = inverse_matrix_p((one + y) % q, q)
    except ZeroDivisionError:
        raise CayleyError("1 + y is not invertible") from None
    return ((one - y) @ inv) % q


def cayley(g: GroupDescriptor, y: np.ndarray, q: int) -> np.ndarray:
    """Y = (1 - y)(1 + y)^-1, checked to lie in the Lie algebra."""
    Y = _cayley_formula(np.asarray(y, dtype=np.int64) % q, q)
    if not _in_lie_algebra(g, Y, q):
        raise CayleyError("Cayley transform left the Lie algebra; is y a group element?")
    return Y


def inverse_cayley(g: GroupDescriptor, Y: np.ndarray, q: int) -> np.ndarray:
    """y = (1 - Y)(1 + Y)^-1, checked to lie in the group."""
    y = _cayley_formula(np.asarray(Y, dtype=np.int64) % q, q)
    if not _in_group(g, y, q):
        raise CayleyError("inverse Cayley transform left the group; is Y in the Lie algebra?")
    return y


# ----------------------------------------------------------------------------
# Group ambient block with Hensel lifting
# ----------------------------------------------------------------------------

class GroupBlock(AmbientBlock):
    """Points of G(O) refined one digit at a time.

    Roots are the points of G(F_p); a point mod w^j lifts to exactly p^dim
    points mod w^(j+1), found by solving the linearised equations over F_p.
    """

    def __init__(self, descriptor: GroupDescriptor, prefix: str = 'g'):
        self.descriptor = descriptor
        self.prefix = prefix
        self.variables = tuple(v.name for v in matrix_vars(descriptor, prefix))
        self.dim = descriptor.dim
        self.facts = frozenset(a.canonical for a in group_equation_atoms(descriptor, prefix))
        self._systems: Dict[Tuple[int, Tuple[int, ...]], Tuple[np.ndarray, np.ndarray]] = {}
        self._roots: Dict[int, List[Tuple[int, ...]]] = {}

    def ident(self) -> str:
        return f"{self.descriptor.kind.value}{self.descriptor.r}({self.prefix})"

    def roots(self, m: ModelSpec) -> List[Tuple[int, ...]]:
        if m.prime not in self._roots:
            group = enumerate_finite_group(self.descriptor, m.prime)
            self._roots[m.prime] = [tuple(int(x) for x in M.reshape(-1)) for M in group.elements]
        return self._roots[m.prime]

    def root_count(self, m: ModelSpec) -> int:
        return order_formula(self.descriptor, m.prime)

    def _linear_system(self, p: int, base: Tuple[int, ...]) -> Tuple[np.ndarray, np.ndarray]:
        key = (p, base)
        hit = self._systems.get(key)
        if hit is None:
            r = self.descriptor.r
            J = self.descriptor.J
            g0 = np.array(base, dtype=np.int64).reshape(r, r)
            columns = []
            for a in range(r * r):
                X = np.zeros(r * r, dtype=np.int64)
                X[a] = 1
                X = X.reshape(r, r)
                columns.append(((X.T @ J @ g0 + g0.T @ J @ X) % p).reshape(-1))
            A = np.array(columns, dtype=np.int64).T
            hit = (A, nullspace_p(A, p))
            self._systems[key] = hit
        return hit

    def lifts(self, m: ModelSpec, point: Tuple[int, ...], depth: int) -> List[Tuple[int, ...]]:
        p, r = m.prime, self.descriptor.r
        ring = ResidueRing(p, m.kind, depth + 1)
        g0 = [list(point[i * r:(i + 1) * r]) for i in range(r)]
        J = [[ring.from_int(int(x)) for x in row] for row in self.descriptor.J]
        gt = [list(col) for col in zip(*g0)]
        E = ring.matmul(ring.matmul(gt, J), g0)
        step = p ** depth
        rhs = []
        for i in range(r):
            for j in range(r):
                e = ring.sub(E[i][j], J[i][j])
                if e % step:
                    raise ValueError(f"point is not on {self.descriptor.name} mod w^{depth}")
                rhs.append((-(e // step)) % p)
        base = tuple(x % p for x in point)
        A, kernel = self._linear_system(p, base)
        x0 = solve_p(A, np.array(rhs, dtype=np.int64), p)
        out = []
        for coeffs in itertools.product(range(p), repeat=len(kernel)):
            X = (x0 + np.array(coeffs, dtype=np.int64) @ kernel) % p if len(kernel) else x0
            out.append(tuple(int(a) + int(d) * step for a, d in zip(point, X)))
        out.sort()
        return out


# ----------------------------------------------------------------------------
# lambda-equivalence classes
# ----------------------------------------------------------------------------

def working_depth(lam: Sequence[int]) -> int:
    return 1 + 2 * max((abs(x) for x in lam), default=0)


def raw_group_inverse(g: GroupDescriptor, ring: ResidueRing, y: List[List[int]]) -> List[List[int]]:
    J = [[ring.from_int(int(x)) for x in row] for row in g.J]
    Jt = [list(col) for col in zip(*J)]
    yt = [list(col) for col in zip(*y)]
    return ring.matmul(ring.matmul(Jt, yt), J)


def as_rows(flat: Sequence[int], r: int) -> List[List[int]]:
    return [list(flat[i * r:(i + 1) * r]) for i in range(r)]


def _flat(M: List[List[int]]) -> Tuple[int, ...]:
    return tuple(x for row in M for x in row)


def _lattice_key(ring: ResidueRing, y: List[List[int]], lam: MultiIndex, M: int) -> Tuple[int, ...]:
    """Hermite normal form of the lattice w^M y a O^r + w^2M O^r."""
    p, k, r = ring.p, ring.n, len(y)
    cols = []
    for j in range(r):
        s = M + lam[j]
        cols.append([ring.shift(y[i][j], s) for i in range(r)])
    for j in range(r):
        cols.append([ring.shift(1, 2 * M) if i == j else 0 for i in range(r)])
    pivots = []
    for i in range(r):
        best, best_val = None, k
        for c in range(i, len(cols)):
            v = ring.valuation(cols[c][i])
            if v < best_val:
                best, best_val = c, v
        if best is None:
            raise UnresolvedMembershipError("lattice lost full rank at the working depth")
        cols[i], cols[best] = cols[best], cols[i]
        v = best_val
        unit = cols[i][i] // p ** v
        inv = ResidueRing(p, ring.kind, k).inverse(unit)
        cols[i] = [ring.mul(x, inv) for x in cols[i]]
        for c in range(i + 1, len(cols)):
            e = cols[c][i]
            if e == 0:
                continue
            t = e // p ** v
            cols[c] = [ring.sub(x, ring.mul(t, y_)) for x, y_ in zip(cols[c], cols[i])]
        pivots.append(v)
    for i in range(r):
        v = pivots[i]
        for c in range(i):
            e = cols[c][i]
            t = e // p ** v
            if t:
                cols[c] = [ring.sub(x, ring.mul(t, y_)) for x, y_ in zip(cols[c], cols[i])]
    return tuple(x for c in range(r) for x in cols[c])


def iwahori_generators(g: GroupDescriptor, p: int, kind: ModelKind, depth: int) -> List[List[List[int]]]:
    """Generators of I mod w^depth: torus units and root elements at every level."""
    ring = ResidueRing(p, kind, depth)
    r, n = g.r, g.n
    zeta = ring.from_int(int(primitive_root(p)))
    zeta_inv = ring.inverse(zeta)
    gens = []
    for i in range(n):
        d = [1] * r
        d[i], d[r - 1 - i] = zeta, zeta_inv
        gens.append([[d[a] if a == b else 0 for b in range(r)] for a in range(r)])
    basis = lie_algebra_basis(g)
    for X, kind_ in zip(basis.matrices, basis.kinds()):
        start = 0 if kind_ == 'upper' else 1
        for j in range(start, depth):
            gens.append(_cayley_lift(g, ring, X, j))
    return gens


def _cayley_lift(g: GroupDescriptor, ring: ResidueRing, X: np.ndarray, j: int) -> List[List[int]]:
    """(1 - w^j X)(1 + w^j X)^-1 over O / w^depth."""
    r = g.r
    Y = [[ring.shift(ring.from_int(int(X[a][b])), j) for b in range(r)] for a in range(r)]
    one = [[1 if a == b else 0 for b in range(r)] for a in range(r)]
    minus = [[ring.sub(one[a][b], Y[a][b]) for b in range(r)] for a in range(r)]
    plus = [[ring.add(one[a][b], Y[a][b]) for b in range(r)] for a in range(r)]
    return ring.matmul(minus, _raw_matrix_inverse(ring, plus))


def _raw_matrix_inverse(ring: ResidueRing, A: List[List[int]]) -> List[List[int]]:
    """Gauss-Jordan over O / w^n for a matrix invertible mod w."""
    r = len(A)
    M = [list(row) + [1 if i == j else 0 for j in range(r)] for i, row in enumerate(A)]
    for c in range(r):
        piv = next((i for i in range(c, r) if M[i][c] % ring.p), None)
        if piv is None:
            raise CayleyError("matrix is not invertible mod w")
        M[c], M[piv] = M[piv], M[c]
        inv = ring.inverse(M[c][c])
        M[c] = [ring.mul(x, inv) for x in M[c]]
        for i in range(r):
            if i != c and M[i][c]:
                f = M[i][c]
                M[i] = [ring.sub(x, ring.mul(f, y)) for x, y in zip(M[i], M[c])]
    return [row[r:] for row in M]


@dataclass
class LambdaClassSet:
    """Representatives of I / (I cap a K a^-1) mod w^depth."""
    lam: MultiIndex
    l_lambda: int
    representatives: List[RawMatrix]
    prime: int
    kind: ModelKind
    depth: int
    alternates: Dict[int, RawMatrix] = field(default_factory=dict)
    subgroup_descr: str = ''

    def __len__(self) -> int:
        return len(self.representatives)


def lambda_class_representatives(g: GroupDescriptor, lam: Sequence[int], m: ModelSpec) -> LambdaClassSet:
    """Breadth-first orbit of the identity coset under left multiplication by I."""
    lam = validate_multi_index(g, lam)
    depth = working_depth(lam)
    if m.depth < depth:
        logger.debug(f"raising depth from {m.depth} to {depth} for lambda={lam}")
    depth = max(depth, m.depth)
    return _lambda_classes(g, lam, m.prime, m.kind, depth)


@lru_cache(maxsize=64)
def _lambda_classes(g: GroupDescriptor, lam: MultiIndex, p: int, kind: ModelKind, depth: int) -> LambdaClassSet:
    r = g.r
    M = max((abs(x) for x in lam), default=0)
    ring = ResidueRing(p, kind, depth)
    identity = [[1 if i == j else 0 for j in range(r)] for i in range(r)]
    gens = iwahori_generators(g, p, kind, depth)
    keys: Dict[Tuple[int, ...], int] = {_lattice_key(ring, identity, lam, M): 0}
    reps: List[List[List[int]]] = [identity]
    alternates: Dict[int, RawMatrix] = {}
    queue = deque([identity])
    while queue:
        y = queue.popleft()
        for s in gens:
            z = ring.matmul(s, y)
            key = _lattice_key(ring, z, lam, M)
            idx = keys.get(key)
            if idx is None:
                keys[key] = len(reps)
                reps.append(z)
                queue.append(z)
            elif idx not in alternates and _flat(z) != _flat(reps[idx]):
                alternates[idx] = _flat(z)
    count = len(reps)
    l_lambda = _log_q(count, p, lam)
    order = sorted(range(count), key=lambda i: _flat(reps[i]))
    where = {old: new for new, old in enumerate(order)}
    logger.info(f"lambda={lam} at p={p}: {count} classes (l={l_lambda})")
    return LambdaClassSet(
        lam=lam, l_lambda=l_lambda, representatives=[_flat(reps[i]) for i in order],
        prime=p, kind=kind, depth=depth,
        alternates={where[i]: alt for i, alt in alternates.items()},
        subgroup_descr=f"I cap a K a^-1 for a = diag(w^{list(lam)})",
    )


def _log_q(count: int, q: int, lam: MultiIndex) -> int:
    e, c = 0, count
    while c % q == 0:
        c //= q
        e += 1
    if c != 1:
        raise NotAPowerError(f"index {count} for lambda={lam} is not a power of {q}")
    return e


def is_equivalent(g: GroupDescriptor, lam: Sequence[int], y1: RawMatrix, y2: RawMatrix, m: ModelSpec) -> bool:
    """y1 ~ y2 iff every entry of a^-1 y1^-1 y2 a is integral."""
    lam = validate_multi_index(g, lam)
    depth = max(working_depth(lam), m.depth)
    r = g.r
    ring = ResidueRing(m.prime, m.kind, depth)
    A = as_rows([ring.reduce(x) for x in y1], r)
    B = as_rows([ring.reduce(x) for x in y2], r)
    P = ring.matmul(raw_group_inverse(g, ring, A), B)
    shifts = conj_exponents(g, lam)
    for i in range(r):
        for j in range(r):
            need = -int(shifts[i, j])
            v = raw_valuation(P[i][j], m.prime, depth)
            if v >= depth and need >= depth:
                raise UnresolvedMembershipError(f"entry ({i}, {j}) is not resolved mod w^{depth}")
            if v < need:
                return False
    return True


def lambda_length(g: GroupDescriptor, lam: Sequence[int], p: int, kind: ModelKind = ModelKind.MIXED) -> int:
    """l_lambda = log_q [I : I cap a K a^-1], cross-checked at a second prime."""
    lam = validate_multi_index(g, lam)
    return _lambda_length(g, lam, p, kind)


@lru_cache(maxsize=None)
def _lambda_length(g: GroupDescriptor, lam: MultiIndex, p: int, kind: ModelKind) -> int:
    depth = working_depth(lam)
    l_lambda = _lambda_classes(g, lam, p, kind, depth).l_lambda
    other = 5 if p == 3 else 3
    check = _lambda_classes(g, lam, other, kind, depth).l_lambda
    if check != l_lambda:
        raise NotAPowerError(f"l_lambda for {lam} differs between p={p} ({l_lambda}) and p={other} ({check})")
    return l_lambda
