"""
Formula builders: group membership and regularity, residue links, unipotent
class formulas, the W sets of the character expansion and the Gamma library.

Every builder returns plain Pas-language ASTs; evaluation lives in
models.padic_model.
"""

import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy
from sympy import Matrix, Poly, Symbol

from models.classical_groups import (
    GroupDescriptor, GroupKind, conj_exponents, group_equation_atoms, lie_algebra_basis,
    matrix_symbols, matrix_vars, regularity_polynomial, validate_multi_index,
)
from models.pas_language import (
    Exists, Eq, Formula, IntConst, Leq, Neq, Ord, Sort, Term, Var, build_res_lowering,
    conj, const, disj, exists_many, forall_many, implies, mul, negate, polynomial_term, sub,
)
from models.unipotent_classes import SquareClass, UnipotentClassLabel, form_parity

logger = logging.getLogger(__name__)

HOLE = 'hole'


def value_const(n: int) -> Term:
    return IntConst(int(n), Sort.VALUE)


def expr_term(expr, symbols: Sequence[Symbol], variables: Sequence[Var]) -> Term:
    """A sympy polynomial expression as a Pas term over the matching variables."""
    expr = sympy.expand(expr)
    sort = variables[0].sort
    if expr == 0:
        return IntConst(0, sort)
    return polynomial_term(Poly(expr, *symbols).terms(), variables)


def zero_atoms(exprs, symbols: Sequence[Symbol], variables: Sequence[Var]) -> List[Formula]:
    """expr = 0 for every entry that is not identically zero."""
    sort = variables[0].sort
    out = []
    for e in exprs:
        e = sympy.expand(e)
        if e != 0:
            out.append(Eq(expr_term(e, symbols, variables), IntConst(0, sort)))
    return out


def residue_vars(names: Sequence[str]) -> List[Var]:
    return [Var(name, Sort.RESIDUE) for name in names]


# ----------------------------------------------------------------------------
# Group formulas
# ----------------------------------------------------------------------------

class GroupFormulas:
    """membership, iwahori, regular, top_unipotent and rtu for one matrix variable."""

    def __init__(self, g: GroupDescriptor, prefix: str = 'g'):
        self.descriptor = g
        self.prefix = prefix
        self.variables = matrix_vars(g, prefix)
        self.symbols = list(matrix_symbols(g, prefix))

    def entry(self, i: int, j: int) -> Var:
        return self.variables[i * self.descriptor.r + j]

    @cached_property
    def membership(self) -> Formula:
        integral = [Leq(value_const(0), Ord(v)) for v in self.variables]
        return conj(*group_equation_atoms(self.descriptor, self.prefix), *integral)

    @cached_property
    def iwahori(self) -> Formula:
        r = self.descriptor.r
        below = [Leq(value_const(1), Ord(self.entry(i, j))) for i in range(r) for j in range(i)]
        return conj(self.membership, *below)

    @cached_property
    def discriminant_term(self) -> Term:
        poly = regularity_polynomial(self.descriptor, self.prefix)
        return polynomial_term(poly.terms(), self.variables)

    @cached_property
    def regular(self) -> Formula:
        return Neq(self.discriminant_term, IntConst(0))

    @cached_property
    def top_unipotent(self) -> Formula:
        r = self.descriptor.r
        links = res_matrix(self.variables, None, f"{self.prefix}r")
        R = Matrix(r, r, links.symbols)
        N = ((R - sympy.eye(r)) ** r).applyfunc(sympy.expand)
        return links.bind(conj(*zero_atoms(list(N), links.symbols, links.variables)))

    @cached_property
    def rtu(self) -> Formula:
        return conj(self.membership, self.regular, self.top_unipotent)

    def as_dict(self) -> Dict[str, Formula]:
        return {'membership': self.membership, 'iwahori': self.iwahori, 'regular': self.regular,
                'top_unipotent': self.top_unipotent, 'rtu': self.rtu}


@lru_cache(maxsize=None)
def build_group_formulas(g: GroupDescriptor, prefix: str = 'g') -> GroupFormulas:
    return GroupFormulas(g, prefix)


# ----------------------------------------------------------------------------
# Residue links
# ----------------------------------------------------------------------------

def res_link(v: Var, x: Term, shift: int = 0) -> Formula:
    """v = Res(w^shift * x), lowered to ord/ac of x."""
    return build_res_lowering(Eq(v, Var(HOLE, Sort.RESIDUE)), x, shift, hole=HOLE)


@dataclass
class ResidueLinks:
    variables: List[Var]
    terms: List[Term]
    shifts: List[int]

    @property
    def symbols(self) -> List[Symbol]:
        return [Symbol(v.name) for v in self.variables]

    def bind(self, body: Formula) -> Formula:
        """exists v1 (link1 /\\ exists v2 (link2 /\\ ... body))."""
        for v, t, s in reversed(list(zip(self.variables, self.terms, self.shifts))):
            body = Exists(v, conj(res_link(v, t, s), body))
        return body


def res_matrix(terms: Sequence[Term], shifts: Optional[Sequence[int]], prefix: str) -> ResidueLinks:
    """Fresh residue variables {prefix}{i}_{j} linked to a square matrix of valued terms."""
    size = int(round(len(terms) ** 0.5))
    if size * size != len(terms):
        raise ValueError(f"res_matrix needs a square matrix of terms, got {len(terms)}")
    shifts = [0] * len(terms) if shifts is None else [int(s) for s in shifts]
    names = [f"{prefix}{i + 1}_{j + 1}" for i in range(size) for j in range(size)]
    return ResidueLinks(residue_vars(names), list(terms), shifts)


# ----------------------------------------------------------------------------
# Unipotent class formulas
# ----------------------------------------------------------------------------

def jordan_matrix(partition: Sequence[int]) -> np.ndarray:
    """J_Lambda: nilpotent Jordan blocks in weakly decreasing size, ones above the diagonal."""
    r = sum(partition)
    M = np.zeros((r, r), dtype=np.int64)
    start = 0
    for size in sorted(partition, reverse=True):
        for k in range(size - 1):
            M[start + k, start + k + 1] = 1
        start += size
    return M


def cleared_cayley(R: Matrix) -> Matrix:
    """det(1 + R) times the Cayley transform: (1 - R) adj(1 + R)."""
    one = sympy.eye(R.shape[0])
    return ((one - R) * (one + R).adjugate()).applyfunc(sympy.expand)


def _power(Y: Matrix, i: int) -> Matrix:
    return (Y ** i).applyfunc(sympy.expand) if i > 0 else sympy.eye(Y.shape[0])


def rank_formula(P: Matrix, rank: int, symbols: Sequence[Symbol], variables: Sequence[Var]) -> Formula:
    """rank(P) = rank by minors: one nonzero rank-sized minor and vanishing larger ones."""
    r = P.shape[0]
    parts: List[Formula] = []
    if rank < r:
        bigger = [P.extract(list(rows), list(cols)).det(method='berkowitz')
                  for rows in combinations(range(r), rank + 1) for cols in combinations(range(r), rank + 1)]
        parts.extend(zero_atoms(bigger, symbols, variables))
    if rank > 0:
        minors = [sympy.expand(P.extract(list(rows), list(cols)).det(method='berkowitz'))
                  for rows in combinations(range(r), rank) for cols in combinations(range(r), rank)]
        parts.append(disj(*[Neq(expr_term(m, symbols, variables), IntConst(0, Sort.RESIDUE))
                            for m in minors if m != 0]))
    return conj(*parts)


def square_class_test(D: Term, cls: SquareClass, name: str) -> Formula:
    """z^2 = D /\\ z != 0 for squares, D != 0 with no root otherwise."""
    z = Var(name, Sort.RESIDUE)
    zero = IntConst(0, Sort.RESIDUE)
    has_root = Exists(z, conj(Neq(z, zero), Eq(mul(z, z), D)))
    if cls is SquareClass.SQUARE:
        return has_root
    return conj(Neq(D, zero), negate(Exists(z, Eq(mul(z, z), D))))


class ClassFormulaBuilder:
    """psi_C(R) for a residue matrix R of free residue variables."""

    def __init__(self, g: GroupDescriptor, label: UnipotentClassLabel, R: Sequence[Var]):
        self.descriptor = g
        self.label = label
        self.R = list(R)
        self.r = g.r
        if len(self.R) != self.r ** 2:
            raise ValueError(f"{g.name} needs {self.r ** 2} residue variables, got {len(self.R)}")
        if sum(label.partition) != self.r:
            raise ValueError(f"label {label} does not partition {self.r}")
        self.R_symbols = [Symbol(v.name) for v in self.R]
        self.Y = cleared_cayley(Matrix(self.r, self.r, self.R_symbols))
        self.J = Matrix(g.J.tolist())

    def _vector(self, name: str) -> Tuple[List[Var], Matrix]:
        vs = residue_vars([f"{name}_{t + 1}" for t in range(self.r)])
        return vs, Matrix([Symbol(v.name) for v in vs])

    def unipotent(self) -> Formula:
        R = Matrix(self.r, self.r, self.R_symbols)
        N = (R - sympy.eye(self.r)) ** self.r
        return conj(*zero_atoms(list(N), self.R_symbols, self.R))

    def jordan_ranks(self) -> Formula:
        parts = []
        for i in range(1, max(self.label.partition) + 1):
            target = self.r - sum(min(i, part) for part in self.label.partition)
            parts.append(rank_formula(_power(self.Y, i), target, self.R_symbols, self.R))
        return conj(*parts)

    def jordan_pattern(self) -> Formula:
        """exists s: s Y = J_Lambda s /\\ det s != 0."""
        names = [f"s{a + 1}_{b + 1}" for a in range(self.r) for b in range(self.r)]
        S_vars = residue_vars(names)
        S = Matrix(self.r, self.r, [Symbol(n) for n in names])
        JL = Matrix(jordan_matrix(self.label.partition).tolist())
        symbols = self.R_symbols + list(S)
        variables = self.R + S_vars
        eqs = zero_atoms(list(S * self.Y - JL * S), symbols, variables)
        det = Neq(expr_term(S.det(method='berkowitz'), symbols, variables), IntConst(0, Sort.RESIDUE))
        return exists_many(S_vars, conj(*eqs, det))

    def _slot(self, i: int, cls: SquareClass, verbatim: bool) -> Formula:
        c = self.label.multiplicity(i)
        sign = -1 if ((i - 1) // 2) % 2 else 1
        W_vars: List[Var] = []
        W_cols = []
        for j in range(c):
            vs, col = self._vector(f"w{i}_{j + 1}")
            W_vars.extend(vs)
            W_cols.append(col)
        symbols = self.R_symbols + [Symbol(v.name) for v in W_vars]
        variables = self.R + W_vars
        Yi, Yi1 = _power(self.Y, i), _power(self.Y, i - 1)
        kernel = zero_atoms([e for col in W_cols for e in Yi * col], symbols, variables)
        gram = Matrix(c, c, lambda j, k: sign * ((Yi1 * W_cols[j]).T * self.J * W_cols[k])[0, 0])
        D = expr_term(gram.det(method='berkowitz'), symbols, variables)
        body = [*kernel]
        if verbatim:
            body.append(self._q_span(i, W_cols, W_vars))
        body.append(square_class_test(D, cls, f"z{i}"))
        return exists_many(W_vars, conj(*body))

    def _q_span(self, i: int, W_cols: List[Matrix], W_vars: List[Var]) -> Formula:
        """forall u in ker Y^i: u = sum a_j w_j + v' + Y v'' with v' in ker Y^(i-1), v'' in ker Y^(i+1)."""
        u_vars, u = self._vector(f"u{i}")
        v1_vars, v1 = self._vector(f"v{i}")
        v2_vars, v2 = self._vector(f"vv{i}")
        a_vars = residue_vars([f"a{i}_{j + 1}" for j in range(len(W_cols))])
        a = [Symbol(v.name) for v in a_vars]
        combo = Matrix.zeros(self.r, 1)
        for coeff, col in zip(a, W_cols):
            combo += coeff * col
        variables = self.R + W_vars + u_vars + v1_vars + v2_vars + a_vars
        symbols = [Symbol(v.name) for v in variables]
        decomposition = conj(
            *zero_atoms(list(u - combo - v1 - self.Y * v2), symbols, variables),
            *zero_atoms(list(_power(self.Y, i - 1) * v1), symbols, variables),
            *zero_atoms(list(_power(self.Y, i + 1) * v2), symbols, variables),
        )
        in_kernel = conj(*zero_atoms(list(_power(self.Y, i) * u), symbols, variables))
        return forall_many(u_vars, implies(in_kernel, exists_many(a_vars + v1_vars + v2_vars, decomposition)))

    def build(self, verbatim: bool = False) -> Formula:
        shape = self.jordan_pattern() if verbatim else self.jordan_ranks()
        slots = [self._slot(i, cls, verbatim) for i, cls in self.label.eps]
        return conj(self.unipotent(), shape, *slots)


def build_class_formula(g: GroupDescriptor, label: UnipotentClassLabel, R: Sequence[Var],
                        verbatim: bool = False) -> Formula:
    """Formula in the residue matrix R (row-major) true exactly on the class labelled `label`."""
    parity = form_parity(g)
    expected = sorted(i for i in set(label.partition) if i % 2 == parity)
    if [i for i, _ in label.eps] != expected:
        raise ValueError(f"label {label} needs square classes for block sizes {expected}")
    return ClassFormulaBuilder(g, label, R).build(verbatim)


# ----------------------------------------------------------------------------
# W sets
# ----------------------------------------------------------------------------

@lru_cache(maxsize=None)
def conjugated_entries(g: GroupDescriptor) -> Tuple:
    """Entries of adj(y) gamma y as sympy polynomials."""
    G = matrix_symbols(g, 'g')
    Y = matrix_symbols(g, 'y')
    P = (Y.adjugate() * G * Y).applyfunc(sympy.expand)
    return tuple(P)


def build_W_formula(g: GroupDescriptor, lam: Sequence[int], label: Optional[UnipotentClassLabel],
                    alpha: Formula, verbatim: bool = False) -> Formula:
    """(gamma, y) with y in I, gamma in Gamma_alpha, a^-1 y^-1 gamma y a in K and residue in the class.

    label=None drops the class condition, which gives the union over all classes.
    """
    lam = validate_multi_index(g, lam)
    r = g.r
    n = conj_exponents(g, lam).reshape(-1)
    gamma_f = build_group_formulas(g, 'g')
    y_f = build_group_formulas(g, 'y')
    symbols = gamma_f.symbols + y_f.symbols
    variables = gamma_f.variables + y_f.variables
    P = [expr_term(e, symbols, variables) for e in conjugated_entries(g)]
    integrality = [Leq(value_const(-n[k]), Ord(P[k])) for k in range(r * r)]
    parts = [y_f.iwahori, gamma_f.membership, alpha, *integrality]
    if label is not None:
        links = res_matrix(P, list(n), 'c')
        parts.append(links.bind(build_class_formula(g, label, links.variables, verbatim)))
    return conj(*parts)


# ----------------------------------------------------------------------------
# Gamma library
# ----------------------------------------------------------------------------

def regular_unipotent(g: GroupDescriptor) -> np.ndarray:
    """Integer regular unipotent u; [[1,1],[0,1]] for Sp(2)."""
    if g.kind is GroupKind.SP and g.n == 1:
        return np.array([[1, 1], [0, 1]], dtype=np.int64)
    basis = lie_algebra_basis(g)
    simple = [X for X in basis.matrices
              if any(X[i, i + 1] != 0 for i in range(g.r - 1)) and not np.any(np.tril(X))]
    X = Matrix(sum(simple).tolist())
    one = sympy.eye(g.r)
    series = sum(((-X) ** k for k in range(1, g.r)), one)
    u = (one - X) * series
    return np.array(u.tolist(), dtype=np.int64)


def congruent_to(g: GroupDescriptor, u: np.ndarray, prefix: str = 'g') -> Formula:
    """gamma = u mod w, entrywise."""
    gf = build_group_formulas(g, prefix)
    atoms = []
    for k, v in enumerate(gf.variables):
        target = int(u.reshape(-1)[k])
        diff = v if target == 0 else sub(v, const(target))
        atoms.append(Leq(value_const(1), Ord(diff)))
    return conj(*atoms)


GAMMA_NAMES = ('G1', 'G2')


def gamma_library(g: GroupDescriptor, name: str, bound: int = 1) -> Formula:
    """G1: gamma = u mod w.  G2: additionally ord(D_l(gamma)) <= bound."""
    u = regular_unipotent(g)
    if name == 'G1':
        return congruent_to(g, u)
    if name == 'G2':
        if bound < 0:
            raise ValueError(f"G2 needs a non-negative bound, got {bound}")
        gf = build_group_formulas(g, 'g')
        return conj(congruent_to(g, u), Leq(Ord(gf.discriminant_term), value_const(bound)))
    raise ValueError(f"unknown Gamma library entry '{name}', expected one of {GAMMA_NAMES}")
