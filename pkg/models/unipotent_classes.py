"""
Unipotent classes of Sp(2n, F_q) and SO(2n+1, F_q) labelled by a Jordan
partition and the square classes of the discriminants of the forms carried
by the multiplicity spaces.
"""

import logging
import re
from dataclasses import dataclass
from enum import Enum
from functools import total_ordering
from typing import Dict, List, Optional, Tuple

import numpy as np
from sympy.utilities.iterables import partitions

from models.classical_groups import (
    FiniteMatrixGroup, GroupDescriptor, GroupKind, cayley, enumerate_finite_group,
)
from utils.finite_field import (
    det_p, legendre, matrix_power_mod, nullspace_p, rank_p, row_reduce_p,
)

logger = logging.getLogger(__name__)


class NotUnipotentError(ValueError):
    pass


class SquareClass(Enum):
    SQUARE = 'sq'
    NONSQUARE = 'nsq'

    @classmethod
    def of(cls, value: int, q: int) -> 'SquareClass':
        symbol = legendre(value, q)
        if symbol == 0:
            raise ValueError("degenerate form: discriminant is zero")
        return cls.SQUARE if symbol == 1 else cls.NONSQUARE


@dataclass(frozen=True)
class QuadFormClass:
    """Rank and discriminant square class of a nondegenerate quadratic form over F_q."""
    dimension: int
    discriminant_class: SquareClass

    @classmethod
    def of_gram(cls, gram: np.ndarray, q: int) -> 'QuadFormClass':
        return cls(gram.shape[0], SquareClass.of(det_p(gram, q), q))

    @classmethod
    def hyperbolic(cls, planes: int, q: int) -> 'QuadFormClass':
        return cls(2 * planes, SquareClass.of((-1) ** planes, q))

    def direct_sum(self, other: 'QuadFormClass') -> 'QuadFormClass':
        same = self.discriminant_class is other.discriminant_class
        return QuadFormClass(self.dimension + other.dimension,
                             SquareClass.SQUARE if same else SquareClass.NONSQUARE)


ZERO_FORM = QuadFormClass(0, SquareClass.SQUARE)


@total_ordering
@dataclass(frozen=True)
class UnipotentClassLabel:
    """Jordan partition plus one square class per form-carrying block size."""
    partition: Tuple[int, ...]
    eps: Tuple[Tuple[int, SquareClass], ...] = ()

    def multiplicity(self, i: int) -> int:
        return self.partition.count(i)

    def forms(self) -> Dict[int, QuadFormClass]:
        """The form class on the multiplicity space of every labelled block size."""
        return {i: QuadFormClass(self.multiplicity(i), c) for i, c in self.eps}

    def sort_key(self) -> Tuple:
        return (self.partition, tuple((i, c.value) for i, c in self.eps))

    def __lt__(self, other: 'UnipotentClassLabel') -> bool:
        return self.sort_key() < other.sort_key()

    def key(self) -> str:
        """Text form, e.g. '(2)[2:sq]' or '(1,1)'."""
        text = "(" + ",".join(str(x) for x in self.partition) + ")"
        if self.eps:
            text += "[" + ",".join(f"{i}:{c.value}" for i, c in self.eps) + "]"
        return text

    def __str__(self) -> str:
        return self.key()

    @classmethod
    def parse(cls, text: str) -> 'UnipotentClassLabel':
        match = re.fullmatch(r"\s*\(([\d,\s]+)\)\s*(?:\[([^\]]*)\])?\s*", text)
        if not match:
            raise ValueError(f"cannot parse class label '{text}'")
        partition = tuple(int(x) for x in match.group(1).split(",") if x.strip())
        eps = []
        if match.group(2):
            for item in match.group(2).split(","):
                i, c = item.split(":")
                eps.append((int(i), SquareClass(c.strip())))
        return cls(partition, tuple(eps))


def form_parity(g: GroupDescriptor) -> int:
    """Block sizes i mod 2 whose multiplicity spaces carry a quadratic form."""
    return 0 if g.kind is GroupKind.SP else 1


def is_unipotent(u: np.ndarray, q: int) -> bool:
    u = np.asarray(u, dtype=np.int64) % q
    r = u.shape[-1]
    N = (u - np.eye(r, dtype=np.int64)) % q
    return not np.any(matrix_power_mod(N, r, q))


def kernel_dimensions(X: np.ndarray, q: int, upto: int) -> List[int]:
    """dim ker X^i for i = 0..upto."""
    r = X.shape[0]
    dims = [0]
    for i in range(1, upto + 1):
        dims.append(r - rank_p(matrix_power_mod(X, i, q), q))
    return dims


def jordan_partition(X: np.ndarray, q: int) -> Tuple[int, ...]:
    """Jordan type of a nilpotent X from c_i = 2 d_i - d_(i-1) - d_(i+1)."""
    r = X.shape[0]
    d = kernel_dimensions(X, q, r + 1)
    if d[r] != r:
        raise NotUnipotentError("matrix is not nilpotent")
    parts = []
    for i in range(r, 0, -1):
        parts.extend([i] * (2 * d[i] - d[i - 1] - d[i + 1]))
    return tuple(parts)


def _span_basis(rows: List[np.ndarray], r: int, q: int) -> np.ndarray:
    if not rows:
        return np.zeros((0, r), dtype=np.int64)
    R, pivots = row_reduce_p(np.array(rows, dtype=np.int64), q)
    return R[:len(pivots)]


def multiplicity_space_basis(X: np.ndarray, i: int, q: int) -> Tuple[np.ndarray, np.ndarray]:
    """Lift of a basis of ker X^i / (ker X^(i-1) + X ker X^(i+1)) and a basis of the subspace."""
    r = X.shape[0]
    kernel = nullspace_p(matrix_power_mod(X, i, q), q)
    lower = nullspace_p(matrix_power_mod(X, i - 1, q), q) if i > 1 else np.zeros((0, r), dtype=np.int64)
    upper = nullspace_p(matrix_power_mod(X, i + 1, q), q)
    sub_rows = [v for v in lower] + [(X @ v) % q for v in upper]
    S = _span_basis(sub_rows, r, q)
    chosen: List[np.ndarray] = []
    current = len(S)
    for w in kernel:
        trial = np.array(list(S) + chosen + [w], dtype=np.int64).reshape(-1, r)
        if rank_p(trial, q) > current:
            chosen.append(w)
            current += 1
    return np.array(chosen, dtype=np.int64).reshape(-1, r), S


def _random_invertible(c: int, q: int, rng: np.random.Generator) -> np.ndarray:
    while True:
        A = rng.integers(0, q, size=(c, c))
        if det_p(A, q):
            return A


def gram_matrix(g: GroupDescriptor, X: np.ndarray, basis: np.ndarray, i: int, q: int) -> np.ndarray:
    """Gram matrix of (-1)^[(i-1)/2] <X^(i-1) v, v'> on the lifted basis."""
    sign = -1 if ((i - 1) // 2) % 2 else 1
    Xi = matrix_power_mod(X, i - 1, q) if i > 1 else np.eye(X.shape[0], dtype=np.int64)
    left = (basis @ Xi.T) % q
    return (sign * (left @ g.J @ basis.T)) % q


def classify_unipotent(g: GroupDescriptor, u: np.ndarray, q: int,
                       rng: Optional[np.random.Generator] = None) -> UnipotentClassLabel:
    """Label of the G(F_q)-class of a unipotent u via its Cayley transform."""
    u = np.asarray(u, dtype=np.int64) % q
    if not is_unipotent(u, q):
        raise NotUnipotentError(f"matrix is not unipotent over F_{q}")
    X = cayley(g, u, q)
    partition = jordan_partition(X, q)
    parity = form_parity(g)
    eps = []
    for i in sorted(set(partition)):
        if i % 2 != parity:
            continue
        basis, S = multiplicity_space_basis(X, i, q)
        c = partition.count(i)
        if len(basis) != c:
            raise ValueError(f"multiplicity space of block size {i} has dimension {len(basis)}, expected {c}")
        if rng is not None:
            basis = (_random_invertible(c, q, rng) @ basis) % q
            if len(S):
                basis = (basis + rng.integers(0, q, size=(c, len(S))) @ S) % q
        form = QuadFormClass.of_gram(gram_matrix(g, X, basis, i, q), q)
        eps.append((i, form.discriminant_class))
    return UnipotentClassLabel(partition, tuple(eps))


def _admissible(g: GroupDescriptor, mult: Dict[int, int]) -> bool:
    bad_parity = 1 if g.kind is GroupKind.SP else 0
    return all(c % 2 == 0 for i, c in mult.items() if i % 2 == bad_parity)


def enumerate_class_labels(g: GroupDescriptor, q: int) -> List[UnipotentClassLabel]:
    """All admissible (partition, eps) pairs, sorted."""
    r = g.r
    parity = form_parity(g)
    labels = set()
    det_J = (-1) ** (r * (r - 1) // 2)
    for mult in partitions(r):
        mult = dict(mult)
        if not _admissible(g, mult):
            continue
        partition = tuple(sorted((i for i, c in mult.items() for _ in range(c)), reverse=True))
        slots = sorted(i for i in mult if i % 2 == parity)
        for choice in range(2 ** len(slots)):
            classes = [SquareClass.NONSQUARE if (choice >> k) & 1 else SquareClass.SQUARE
                       for k in range(len(slots))]
            if g.kind is GroupKind.SO:
                # odd-block forms plus hyperbolic planes must give the form of V
                total = ZERO_FORM
                for i, cls in zip(slots, classes):
                    total = total.direct_sum(QuadFormClass(mult[i], cls))
                total = total.direct_sum(QuadFormClass.hyperbolic((r - total.dimension) // 2, q))
                if total.discriminant_class is not SquareClass.of(det_J, q):
                    continue
            labels.add(UnipotentClassLabel(partition, tuple(zip(slots, classes))))
    return sorted(labels)


@dataclass
class UnipotentOrbit:
    representative: np.ndarray
    indices: np.ndarray

    @property
    def size(self) -> int:
        return len(self.indices)


def unipotent_mask(group: FiniteMatrixGroup) -> np.ndarray:
    r, q = group.descriptor.r, group.q
    N = (group.elements - np.eye(r, dtype=np.int64)) % q
    return ~np.any(matrix_power_mod(N, r, q).reshape(len(group), -1), axis=1)


def brute_force_orbits(g: GroupDescriptor, q: int, budget: int = 200_000) -> List[UnipotentOrbit]:
    """Unipotent classes by closing each element under conjugation."""
    group = enumerate_finite_group(g, q, budget)
    mask = unipotent_mask(group)
    assigned = ~mask
    orbits = []
    for i in np.nonzero(mask)[0]:
        if assigned[i]:
            continue
        members = np.unique(group.index_of(group.conjugates(group.elements[i])))
        assigned[members] = True
        orbits.append(UnipotentOrbit(group.elements[members[0]], members))
    logger.info(f"{g.name} over F_{q}: {int(mask.sum())} unipotent elements in {len(orbits)} classes")
    return orbits


def class_representatives(g: GroupDescriptor, q: int) -> Dict[UnipotentClassLabel, np.ndarray]:
    """Least element of every unipotent class, keyed by its label."""
    out = {}
    for orbit in brute_force_orbits(g, q):
        out[classify_unipotent(g, orbit.representative, q)] = orbit.representative
    return dict(sorted(out.items()))
