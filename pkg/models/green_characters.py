"""
Character tables of small finite groups and the Deligne-Lusztig cuspidal
values at unipotent classes, fitted to polynomials in q.

The table is computed with Dixon's method: class matrices are diagonalised
simultaneously over a prime field F_P with P = 1 mod the group exponent,
and character values are lifted back to cyclotomic integers from the
eigenvalue multiplicities of each element.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import gcd, isqrt
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy
from sympy import Poly, Symbol, cyclotomic_poly, nextprime, primitive_root, sqrt_mod
from sympy.polys.polyfuncs import interpolate

from models.classical_groups import FiniteMatrixGroup, GroupDescriptor, GroupKind, enumerate_finite_group
from models.unipotent_classes import UnipotentClassLabel, classify_unipotent, is_unipotent
from utils.finite_field import inverse_mod, nullspace_p, row_reduce_p

logger = logging.getLogger(__name__)

TABLE_BUDGET = 10_000
_X = Symbol('x')


class CharacterTableError(ValueError):
    pass


class CuspidalSelectionError(ValueError):
    pass


class GreenFitError(ValueError):
    pass


class UnknownLabelError(ValueError):
    pass


@dataclass(frozen=True)
class CyclotomicValue:
    """sum_j coefficients[j] * zeta_n^j with zeta_n = exp(2 pi i / n)."""
    n: int
    coefficients: Tuple[int, ...]

    def reduced(self, conductor: Optional[int] = None) -> Tuple[int, ...]:
        """Coefficients of the remainder mod the conductor's cyclotomic polynomial."""
        N = conductor or self.n
        if N % self.n:
            raise ValueError(f"{N} is not a multiple of {self.n}")
        step = N // self.n
        poly = Poly(sum(c * _X ** (j * step) for j, c in enumerate(self.coefficients)), _X)
        rem = poly.rem(Poly(cyclotomic_poly(N, _X), _X))
        return tuple(int(c) for c in reversed(rem.all_coeffs()))

    def rational(self) -> Optional[Fraction]:
        rem = self.reduced()
        if any(rem[1:]):
            return None
        return Fraction(rem[0] if rem else 0)

    def to_sympy(self):
        zeta = sympy.exp(2 * sympy.pi * sympy.I / self.n)
        return sympy.nsimplify(sum(c * zeta ** j for j, c in enumerate(self.coefficients)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CyclotomicValue):
            return NotImplemented
        N = self.n * other.n // gcd(self.n, other.n)
        return self.reduced(N) == other.reduced(N)

    def __hash__(self) -> int:
        value = self.rational()
        return hash(value) if value is not None else hash(self.reduced())

    def __str__(self) -> str:
        value = self.rational()
        if value is not None:
            return str(value)
        terms = [f"{c}*z{self.n}^{j}" for j, c in enumerate(self.coefficients) if c]
        return " + ".join(terms) or "0"


@dataclass
class CharacterTable:
    group: FiniteMatrixGroup
    classes: List[np.ndarray]
    values: List[List[CyclotomicValue]]  # [character][class]
    prime: int
    identity_class: int = 0

    @property
    def class_sizes(self) -> List[int]:
        return [len(c) for c in self.classes]

    @property
    def degrees(self) -> List[int]:
        return [table_degree(row, self.identity_class) for row in self.values]

    def representative(self, t: int) -> np.ndarray:
        return self.group.elements[self.classes[t][0]]

    def __len__(self) -> int:
        return len(self.values)


# ----------------------------------------------------------------------------
# Dixon's method
# ----------------------------------------------------------------------------

def dixon_prime(order: int, exponent: int) -> int:
    """Least prime P > 2 sqrt(|G|) with P = 1 mod the exponent."""
    P = 2 * isqrt(order) + 1
    while True:
        P = nextprime(P)
        if P % exponent == 1:
            return P


def _element_order(M: np.ndarray, q: int) -> int:
    one = np.eye(M.shape[0], dtype=np.int64)
    power, k = M % q, 1
    while not np.array_equal(power, one):
        power = (power @ M) % q
        k += 1
    return k


def _class_index(group: FiniteMatrixGroup, classes: List[np.ndarray]) -> np.ndarray:
    out = np.empty(len(group), dtype=np.int64)
    for t, members in enumerate(classes):
        out[members] = t
    return out


def class_matrices(group: FiniteMatrixGroup, classes: List[np.ndarray], class_of: np.ndarray) -> List[np.ndarray]:
    """M_s[i, t] = #{x in C_s : x^-1 z_t in C_i} for a fixed z_t in C_t."""
    q = group.q
    k = len(classes)
    inverses = group.descriptor.inverse_formula(group.elements, q)
    reps = np.array([group.elements[c[0]] for c in classes])
    out = []
    for members in classes:
        X_inv = inverses[members]
        M = np.zeros((k, k), dtype=np.int64)
        for t in range(k):
            products = (X_inv @ reps[t]) % q
            M[:, t] = np.bincount(class_of[group.index_of(products)], minlength=k)
        out.append(M)
    return out


def _eigenvalues(A: np.ndarray, P: int) -> List[int]:
    coeffs = [int(c) % P for c in sympy.Matrix(A.tolist()).charpoly(_X).all_coeffs()]
    roots = []
    for z in range(P):
        acc = 0
        for c in coeffs:
            acc = (acc * z + c) % P
        if acc == 0:
            roots.append(z)
    return roots


def _split(space: np.ndarray, M: np.ndarray, P: int) -> List[np.ndarray]:
    """Split the row space `space` (invariant under v -> M v) into eigenspaces."""
    R, pivots = row_reduce_p(space, P)
    S = R[:len(pivots)]
    A = ((S @ M.T) % P)[:, pivots]
    pieces = []
    d = len(pivots)
    for z in _eigenvalues(A, P):
        C = nullspace_p(((A - z * np.eye(d, dtype=np.int64)) % P).T, P)
        pieces.append((C @ S) % P)
    return pieces


def common_eigenvectors(matrices: Sequence[np.ndarray], P: int) -> List[np.ndarray]:
    k = matrices[0].shape[0]
    spaces = [np.eye(k, dtype=np.int64)]
    for M in matrices:
        if all(len(s) == 1 for s in spaces):
            break
        refined = []
        for s in spaces:
            refined.extend([s] if len(s) == 1 else _split(s, M, P))
        spaces = refined
    if len(spaces) != k or any(len(s) != 1 for s in spaces):
        raise CharacterTableError(f"class matrices did not split into {k} common eigenvectors over F_{P}")
    return [s[0] for s in spaces]


def _power_classes(group: FiniteMatrixGroup, class_of: np.ndarray, rep: np.ndarray, order: int) -> List[int]:
    q = group.q
    powers = [np.eye(rep.shape[0], dtype=np.int64)]
    for _ in range(order - 1):
        powers.append((powers[-1] @ rep) % q)
    return [int(t) for t in class_of[group.index_of(np.array(powers))]]


def character_table(group: FiniteMatrixGroup, budget: int = TABLE_BUDGET) -> CharacterTable:
    """Complete character table with verified orthogonality."""
    if len(group) > budget:
        raise CharacterTableError(f"group of order {len(group)} exceeds the table budget {budget}")
    q, order = group.q, len(group)
    classes = sorted(group.conjugacy_classes(), key=lambda c: int(c[0]))
    class_of = _class_index(group, classes)
    k = len(classes)
    sizes = [len(c) for c in classes]
    reps = [group.elements[c[0]] for c in classes]
    orders = [_element_order(r, q) for r in reps]
    exponent = int(np.lcm.reduce(orders))
    P = dixon_prime(order, exponent)
    logger.info(f"Character table of {group.descriptor.name}(F_{q}): {k} classes, exponent {exponent}, working prime {P}")

    identity = int(class_of[group.identity_index])
    inverse_class = [int(class_of[group.index_of(group.descriptor.inverse_formula(r[None], q))[0]]) for r in reps]
    vectors = common_eigenvectors(class_matrices(group, classes, class_of), P)

    rows_mod_P = []
    for v in vectors:
        omega = (v * inverse_mod(int(v[identity]), P)) % P
        norm = sum(int(omega[t]) * int(omega[inverse_class[t]]) * inverse_mod(sizes[t], P) for t in range(k)) % P
        degree_sq = order * inverse_mod(norm, P) % P
        root = sqrt_mod(degree_sq, P)
        if root is None:
            raise CharacterTableError(f"degree^2 = {degree_sq} is not a square mod {P}")
        degree = min(root, P - root)
        rows_mod_P.append([int(omega[t]) * degree * inverse_mod(sizes[t], P) % P for t in range(k)])

    zeta = pow(primitive_root(P), (P - 1) // exponent, P)
    power_maps = [_power_classes(group, class_of, reps[t], orders[t]) for t in range(k)]
    values = []
    for row in rows_mod_P:
        lifted = []
        for t in range(k):
            n = orders[t]
            z = pow(zeta, exponent // n, P)
            inv_n = inverse_mod(n, P)
            coeffs = []
            for j in range(n):
                m = sum(row[power_maps[t][s]] * pow(z, (-j * s) % n, P) for s in range(n)) * inv_n % P
                coeffs.append(m if m <= P // 2 else m - P)
            lifted.append(CyclotomicValue(n, tuple(coeffs)))
        values.append(lifted)

    table = CharacterTable(group, classes, values, P, identity)
    _verify(table, rows_mod_P, inverse_class)
    values.sort(key=lambda row: (table_degree(row, identity), [str(v) for v in row]))
    return table


def table_degree(row: List[CyclotomicValue], identity_class: int) -> int:
    return int(row[identity_class].rational())


def _verify(table: CharacterTable, rows_mod_P: List[List[int]], inverse_class: List[int]):
    P, order, sizes = table.prime, len(table.group), table.class_sizes
    k = len(sizes)
    if sum(d * d for d in table.degrees) != order:
        raise CharacterTableError(f"sum of squared degrees {sum(d * d for d in table.degrees)} != |G| = {order}")
    for a in range(k):
        for b in range(k):
            s = sum(sizes[t] * rows_mod_P[a][t] * rows_mod_P[b][inverse_class[t]] for t in range(k)) % P
            if s != (order % P if a == b else 0):
                raise CharacterTableError(f"rows {a} and {b} are not orthogonal")
    for s in range(k):
        for t in range(k):
            c = sum(rows_mod_P[a][s] * rows_mod_P[a][inverse_class[t]] for a in range(k)) % P
            expected = (order * inverse_mod(sizes[s], P)) % P if s == t else 0
            if c != expected:
                raise CharacterTableError(f"columns {s} and {t} are not orthogonal")


# ----------------------------------------------------------------------------
# Deligne-Lusztig cuspidal values
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class TorusDatum:
    """Partition w of the rank labelling an elliptic torus class."""
    w: Tuple[int, ...]

    def __post_init__(self):
        if not self.w or any(x < 1 for x in self.w) or list(self.w) != sorted(self.w, reverse=True):
            raise ValueError(f"w must be a weakly decreasing partition, got {self.w}")

    @property
    def rank(self) -> int:
        return sum(self.w)

    @classmethod
    def parse(cls, text: str) -> 'TorusDatum':
        return cls(tuple(int(x) for x in text.replace('(', '').replace(')', '').split(',') if x.strip()))


def _check_supported(g: GroupDescriptor, w: TorusDatum):
    if w.rank != g.n:
        raise ValueError(f"w = {w.w} is not a partition of the rank {g.n}")
    if not (g.kind is GroupKind.SP and g.n == 1):
        raise ValueError(f"cuspidal values are only tabulated for Sp(2), not {g.name}")


@lru_cache(maxsize=16)
def _table_for(q: int) -> CharacterTable:
    return character_table(enumerate_finite_group(GroupDescriptor.symplectic(1), q, TABLE_BUDGET))


def dl_cuspidal_values(q: int, g: Optional[GroupDescriptor] = None,
                       w: TorusDatum = TorusDatum((1,))) -> Dict[UnipotentClassLabel, Fraction]:
    """Common value of the degree q-1 characters on every unipotent class."""
    g = g or GroupDescriptor.symplectic(1)
    _check_supported(g, w)
    table = _table_for(q)
    selected = [row for row in table.values if table_degree(row, table.identity_class) == q - 1]
    if not selected:
        raise CuspidalSelectionError(f"no character of degree {q - 1} for q = {q}")
    out: Dict[UnipotentClassLabel, Fraction] = {}
    for t in range(len(table.classes)):
        rep = table.representative(t)
        if not is_unipotent(rep, q):
            continue
        label = classify_unipotent(g, rep, q)
        values = {row[t] for row in selected}
        if len(values) != 1:
            raise CuspidalSelectionError(
                f"{len(selected)} characters of degree {q - 1} disagree on class {label} at q = {q}")
        value = next(iter(values)).rational()
        if value is None:
            raise CuspidalSelectionError(f"value on class {label} at q = {q} is irrational")
        out[label] = value
    logger.info(f"Cuspidal values at q={q}: " + ", ".join(f"{l}={v}" for l, v in sorted(out.items())))
    return dict(sorted(out.items()))


# ----------------------------------------------------------------------------
# Polynomial fits
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class CharacterPolynomial:
    """sum coefficients[i] q^i with exact rational coefficients."""
    coefficients: Tuple[Fraction, ...]
    degree_bound: int

    def __call__(self, q: int) -> Fraction:
        value = Fraction(0)
        for c in reversed(self.coefficients):
            value = value * q + c
        return value

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def to_sympy(self):
        Q = Symbol('q')
        return sympy.expand(sum(sympy.Rational(c.numerator, c.denominator) * Q ** i
                                for i, c in enumerate(self.coefficients)))

    def __str__(self) -> str:
        return str(self.to_sympy())


def fit_green_polynomial(samples: Sequence[Tuple[int, Fraction]], degree_bound: int) -> CharacterPolynomial:
    """Interpolate through degree_bound + 1 samples; every further sample is a held-out check."""
    samples = sorted((int(q), Fraction(v)) for q, v in samples)
    if len(samples) < degree_bound + 2:
        raise GreenFitError(f"degree {degree_bound} needs at least {degree_bound + 2} samples, got {len(samples)}")
    Q = Symbol('q')
    head = samples[:degree_bound + 1]
    expr = interpolate([(q, sympy.Rational(v.numerator, v.denominator)) for q, v in head], Q)
    poly = Poly(expr, Q)
    coeffs = [Fraction(str(c)) for c in reversed(poly.all_coeffs())]
    while len(coeffs) > 1 and coeffs[-1] == 0:
        coeffs.pop()
    fitted = CharacterPolynomial(tuple(coeffs), degree_bound)
    for q, v in samples[degree_bound + 1:]:
        if fitted(q) != v:
            raise GreenFitError(f"held-out sample q={q}: fitted {fitted(q)} != {v}")
    return fitted


@dataclass
class GreenPolynomials:
    """One fitted polynomial per unipotent label."""
    polynomials: Dict[UnipotentClassLabel, CharacterPolynomial] = field(default_factory=dict)
    primes: Tuple[int, ...] = ()

    @classmethod
    def fit(cls, primes: Sequence[int] = (5, 7, 11), degree_bound: int = 1,
            g: Optional[GroupDescriptor] = None, w: TorusDatum = TorusDatum((1,))) -> 'GreenPolynomials':
        tables = {q: dl_cuspidal_values(q, g, w) for q in primes}
        labels = set.intersection(*(set(t) for t in tables.values()))
        polys = {}
        for label in sorted(labels):
            samples = [(q, tables[q][label]) for q in primes]
            last: Optional[GreenFitError] = None
            for d in range(degree_bound + 1):
                try:
                    polys[label] = fit_green_polynomial(samples, d)
                    break
                except GreenFitError as exc:
                    last = exc
            else:
                raise GreenFitError(f"no polynomial of degree <= {degree_bound} fits class {label}: {last}")
            logger.info(f"Green polynomial for {label}: {polys[label]}")
        return cls(polys, tuple(primes))

    def rho(self, label: UnipotentClassLabel, q: int) -> Fraction:
        try:
            return self.polynomials[label](q)
        except KeyError:
            raise UnknownLabelError(f"no fitted polynomial for class {label}") from None

    def rows(self) -> List[Dict[str, str]]:
        return [{'label': label.key(), 'polynomial': str(poly), 'degree': str(poly.degree)}
                for label, poly in sorted(self.polynomials.items())]


def rho(label: UnipotentClassLabel, q: int, polynomials: Optional[GreenPolynomials] = None) -> Fraction:
    polynomials = polynomials or default_green_polynomials()
    return polynomials.rho(label, q)


@lru_cache(maxsize=1)
def default_green_polynomials() -> GreenPolynomials:
    return GreenPolynomials.fit()
